#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gridseek/data.hpp"

namespace gridseek::data {

TrainConfig preset(net::ModelVariant variant) {
  TrainConfig cfg;
  cfg.variant = variant;
  switch (variant) {
    case net::ModelVariant::kM1:
      cfg.epochs = 80;
      cfg.random_jitter = true;
      break;
    case net::ModelVariant::kM2:
      break;
    case net::ModelVariant::kM3:
    case net::ModelVariant::kM4:
      cfg.augment.p_blur = 0.5;
      cfg.augment.blur_sigma_range = {0.5, 2.0};
      cfg.augment.interpolations = {imops::Interpolation::kNearest, imops::Interpolation::kBilinear,
                                    imops::Interpolation::kBicubic};
      break;
  }
  return cfg;
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0)) throw Error(ErrorKind::kConfig, std::string(name) + " must be positive");
  };
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  positive(tau, "tau");
  positive(learning_rate, "learning_rate");
  positive(crops_per_image, "crops_per_image");
  positive(optimizer.eps, "adam_eps");
  if (anchors_per_sample < 0) throw Error(ErrorKind::kConfig, "anchors_per_sample must be non-negative");
  if (!(optimizer.beta1 >= 0 && optimizer.beta1 < 1) || !(optimizer.beta2 >= 0 && optimizer.beta2 < 1)) {
    throw Error(ErrorKind::kConfig, "adam betas must be in [0,1)");
  }
  try {
    model_config().validate();
    augment.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::kConfig, e.what());
  }
}

net::ModelConfig TrainConfig::model_config() const {
  net::ModelConfig m;
  m.image_size = image_size;
  m.crop_size = crop_size;
  m.embed_dim = embedding_dim;
  m.repr_dim = repr_dim;
  m.pyramid_channels = pyramid_channels;
  m.stage_depth = stage_depth;
  m.image_projection_head = variant == net::ModelVariant::kM4;
  m.seed = seed;
  return m;
}

contrast::LossConfig TrainConfig::loss_config() const {
  return {tau, batch_size, anchors_per_sample};
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("expected an unsigned integer, got '" + v + "'");
  return out;
}

int to_int32(const std::string& v) {
  const auto x = to_int(v);
  if (x < INT32_MIN || x > INT32_MAX) throw std::invalid_argument("integer out of range: " + v);
  return static_cast<int>(x);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

imops::Range to_range(const std::string& v) {
  const auto parts = split_commas(v);
  if (parts.size() != 2) throw std::invalid_argument("expected lo,hi, got '" + v + "'");
  return {to_double(parts[0]), to_double(parts[1])};
}

net::ModelVariant to_variant(const std::string& v) {
  std::string s = v;
  if (!s.empty() && (s[0] == 'M' || s[0] == 'm')) s = s.substr(1);
  if (s == "1") return net::ModelVariant::kM1;
  if (s == "2") return net::ModelVariant::kM2;
  if (s == "3") return net::ModelVariant::kM3;
  if (s == "4") return net::ModelVariant::kM4;
  throw std::invalid_argument("variant must be 1-4 or M1-M4, got '" + v + "'");
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"epochs", [](TrainConfig& c, const std::string& v) { c.epochs = to_int32(v); }},
      {"batch_size", [](TrainConfig& c, const std::string& v) { c.batch_size = to_int32(v); }},
      {"tau", [](TrainConfig& c, const std::string& v) { c.tau = to_double(v); }},
      {"learning_rate", [](TrainConfig& c, const std::string& v) { c.learning_rate = to_double(v); }},
      {"seed", [](TrainConfig& c, const std::string& v) { c.seed = to_u64(v); }},
      {"eval_seed", [](TrainConfig& c, const std::string& v) { c.eval_seed = to_u64(v); }},
      {"image_size", [](TrainConfig& c, const std::string& v) { c.image_size = to_int32(v); }},
      {"crop_size", [](TrainConfig& c, const std::string& v) { c.crop_size = to_int32(v); }},
      {"embedding_dim", [](TrainConfig& c, const std::string& v) { c.embedding_dim = to_int32(v); }},
      {"repr_dim", [](TrainConfig& c, const std::string& v) { c.repr_dim = to_int32(v); }},
      {"pyramid_channels", [](TrainConfig& c, const std::string& v) { c.pyramid_channels = to_int32(v); }},
      {"stage_depth", [](TrainConfig& c, const std::string& v) { c.stage_depth = to_int32(v); }},
      {"anchors_per_sample", [](TrainConfig& c, const std::string& v) { c.anchors_per_sample = to_int32(v); }},
      {"crops_per_image", [](TrainConfig& c, const std::string& v) { c.crops_per_image = to_int32(v); }},
      {"random_jitter", [](TrainConfig& c, const std::string& v) { c.random_jitter = to_bool(v); }},
      {"p_crop_zoom", [](TrainConfig& c, const std::string& v) { c.augment.p_crop_zoom = to_double(v); }},
      {"p_flip_h", [](TrainConfig& c, const std::string& v) { c.augment.p_flip_h = to_double(v); }},
      {"p_flip_v", [](TrainConfig& c, const std::string& v) { c.augment.p_flip_v = to_double(v); }},
      {"p_jpeg", [](TrainConfig& c, const std::string& v) { c.augment.p_jpeg = to_double(v); }},
      {"p_blur", [](TrainConfig& c, const std::string& v) { c.augment.p_blur = to_double(v); }},
      {"hue_delta", [](TrainConfig& c, const std::string& v) { c.augment.hue_delta = to_double(v); }},
      {"sat_range", [](TrainConfig& c, const std::string& v) { c.augment.sat_range = to_range(v); }},
      {"val_range", [](TrainConfig& c, const std::string& v) { c.augment.val_range = to_range(v); }},
      {"blur_sigma_range", [](TrainConfig& c, const std::string& v) { c.augment.blur_sigma_range = to_range(v); }},
      {"zoom_scale_range", [](TrainConfig& c, const std::string& v) { c.augment.zoom_scale_range = to_range(v); }},
      {"aspect_range", [](TrainConfig& c, const std::string& v) { c.augment.aspect_range = to_range(v); }},
      {"jpeg_quality_range",
       [](TrainConfig& c, const std::string& v) {
         const auto parts = split_commas(v);
         if (parts.size() != 2) throw std::invalid_argument("expected lo,hi, got '" + v + "'");
         c.augment.jpeg_quality_range = {to_int32(parts[0]), to_int32(parts[1])};
       }},
      {"interpolations",
       [](TrainConfig& c, const std::string& v) {
         c.augment.interpolations.clear();
         for (const auto& p : split_commas(v)) {
           try {
             c.augment.interpolations.push_back(imops::parse_interpolation(p));
           } catch (const Error&) {
             throw std::invalid_argument("unknown interpolation '" + p + "'");
           }
         }
       }},
      {"adam_beta1", [](TrainConfig& c, const std::string& v) { c.optimizer.beta1 = to_double(v); }},
      {"adam_beta2", [](TrainConfig& c, const std::string& v) { c.optimizer.beta2 = to_double(v); }},
      {"adam_eps", [](TrainConfig& c, const std::string& v) { c.optimizer.eps = to_double(v); }},
  };
  return table;
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  struct Line {
    int number;
    std::string key, value;
  };
  std::vector<Line> lines;
  std::optional<net::ModelVariant> variant;
  std::map<std::string, int> seen;

  std::istringstream in(text);
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::kConfig, "line " + std::to_string(number) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorKind::kConfig, "line " + std::to_string(number) + ": empty key");
    if (auto [it, fresh] = seen.emplace(key, number); !fresh) {
      throw Error(ErrorKind::kConfig, "line " + std::to_string(number) + ": duplicate key '" + key +
                                          "' (first on line " + std::to_string(it->second) + ")");
    }
    if (key == "variant") {
      try {
        variant = to_variant(value);
      } catch (const std::invalid_argument& e) {
        throw Error(ErrorKind::kConfig, "line " + std::to_string(number) + ": " + e.what());
      }
      continue;
    }
    if (!setters().count(key)) throw Error(ErrorKind::kConfig, "line " + std::to_string(number) + ": unknown key '" + key + "'");
    lines.push_back({number, key, value});
  }

  TrainConfig cfg = preset(variant.value_or(net::ModelVariant::kM4));
  for (const auto& l : lines) {
    try {
      setters().at(l.key)(cfg, l.value);
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorKind::kConfig, "line " + std::to_string(l.number) + ": " + l.key + ": " + e.what());
    }
    // Range checks per line so the error can name it.
    TrainConfig probe = cfg;
    probe.augment.seed = probe.seed;
    probe.augment.output_size = probe.image_size;
    try {
      probe.validate();
    } catch (const Error& e) {
      // Some keys are only valid in combination (e.g. crop_size vs
      // image_size); report against the line that made the config invalid.
      throw Error(ErrorKind::kConfig, "line " + std::to_string(l.number) + ": " + e.what());
    }
  }
  cfg.augment.seed = cfg.seed;
  cfg.augment.output_size = cfg.image_size;
  cfg.validate();
  return cfg;
}

TrainConfig parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::kIo, "cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const TrainConfig& c) {
  std::ostringstream out;
  auto range = [](const imops::Range& r) { return fmt_double(r.lo) + "," + fmt_double(r.hi); };
  out << "variant=" << net::to_string(c.variant) << "\n"
      << "epochs=" << c.epochs << "\n"
      << "batch_size=" << c.batch_size << "\n"
      << "tau=" << fmt_double(c.tau) << "\n"
      << "learning_rate=" << fmt_double(c.learning_rate) << "\n"
      << "seed=" << c.seed << "\n"
      << "eval_seed=" << c.eval_seed << "\n"
      << "image_size=" << c.image_size << "\n"
      << "crop_size=" << c.crop_size << "\n"
      << "embedding_dim=" << c.embedding_dim << "\n"
      << "repr_dim=" << c.repr_dim << "\n"
      << "pyramid_channels=" << c.pyramid_channels << "\n"
      << "stage_depth=" << c.stage_depth << "\n"
      << "anchors_per_sample=" << c.anchors_per_sample << "\n"
      << "crops_per_image=" << c.crops_per_image << "\n"
      << "random_jitter=" << (c.random_jitter ? "true" : "false") << "\n"
      << "p_crop_zoom=" << fmt_double(c.augment.p_crop_zoom) << "\n"
      << "p_flip_h=" << fmt_double(c.augment.p_flip_h) << "\n"
      << "p_flip_v=" << fmt_double(c.augment.p_flip_v) << "\n"
      << "p_jpeg=" << fmt_double(c.augment.p_jpeg) << "\n"
      << "p_blur=" << fmt_double(c.augment.p_blur) << "\n"
      << "hue_delta=" << fmt_double(c.augment.hue_delta) << "\n"
      << "sat_range=" << range(c.augment.sat_range) << "\n"
      << "val_range=" << range(c.augment.val_range) << "\n"
      << "blur_sigma_range=" << range(c.augment.blur_sigma_range) << "\n"
      << "zoom_scale_range=" << range(c.augment.zoom_scale_range) << "\n"
      << "aspect_range=" << range(c.augment.aspect_range) << "\n"
      << "jpeg_quality_range=" << c.augment.jpeg_quality_range.first << "," << c.augment.jpeg_quality_range.second
      << "\n";
  out << "interpolations=";
  for (std::size_t i = 0; i < c.augment.interpolations.size(); ++i) {
    out << (i ? "," : "") << imops::to_string(c.augment.interpolations[i]);
  }
  out << "\n"
      << "adam_beta1=" << fmt_double(c.optimizer.beta1) << "\n"
      << "adam_beta2=" << fmt_double(c.optimizer.beta2) << "\n"
      << "adam_eps=" << fmt_double(c.optimizer.eps) << "\n";
  return out.str();
}

}  // namespace gridseek::data
