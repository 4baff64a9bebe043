#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "gridseek/imops.hpp"
#include "gridseek/rng.hpp"

namespace gridseek::imops {

namespace {

// Independent sub-stream per pipeline step, so the decision for one step
// never depends on which earlier steps fired.
enum Step : std::uint64_t { kCropZoom = 1, kResize, kFlipH, kFlipV, kJpeg, kJitter, kBlur };

CounterRng step_rng(const AugmentConfig& cfg, std::uint64_t sample_index, Step step) {
  return CounterRng(hash_key({cfg.seed, sample_index, step}));
}

Interpolation draw_interpolation(CounterRng& rng, const std::vector<Interpolation>& set) {
  const auto i = rng.uniform_int(0, static_cast<std::int64_t>(set.size()) - 1);
  return set[static_cast<std::size_t>(i)];
}

double interp_code(Interpolation m) { return static_cast<double>(static_cast<int>(m)); }
Interpolation interp_from_code(double v) {
  const int i = static_cast<int>(v);
  if (i < 0 || i > 2) throw Error(ErrorKind::kInvalidArgument, "bad interpolation code in augment log");
  return static_cast<Interpolation>(i);
}

int round_side(double v) { return std::max(1, static_cast<int>(std::lround(v))); }

// Applies one logged transform; shared by augment and replay.
Image apply(const Image& img, const AppliedTransform& t) {
  if (t.name == "crop_zoom") {
    CropSpec window{static_cast<int>(t.param("x0")), static_cast<int>(t.param("y0")), static_cast<int>(t.param("w")),
                    static_cast<int>(t.param("h")), ""};
    return crop(img, window);
  }
  if (t.name == "aspect" || t.name == "resize") {
    return resize(img, static_cast<int>(t.param("w")), static_cast<int>(t.param("h")),
                  interp_from_code(t.param("interpolation")));
  }
  if (t.name == "flip_h") return flip_h(img);
  if (t.name == "flip_v") return flip_v(img);
  if (t.name == "jpeg") return jpeg_roundtrip(img, static_cast<int>(t.param("quality")));
  if (t.name == "hsv_jitter") return hsv_jitter(img, t.param("hue_delta"), t.param("sat_scale"), t.param("val_scale"));
  if (t.name == "gaussian_blur") return gaussian_blur(img, t.param("sigma"));
  throw Error(ErrorKind::kInvalidArgument, "unknown transform '" + t.name + "' in augment log");
}

}  // namespace

void AugmentConfig::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::kInvalidArgument, std::string(name) + " must be in [0,1]");
  };
  prob(p_crop_zoom, "p_crop_zoom");
  prob(p_flip_h, "p_flip_h");
  prob(p_flip_v, "p_flip_v");
  prob(p_jpeg, "p_jpeg");
  prob(p_blur, "p_blur");
  auto positive_range = [](const Range& r, const char* name) {
    if (!(r.lo > 0.0 && r.lo <= r.hi)) throw Error(ErrorKind::kInvalidArgument, std::string(name) + " must satisfy 0 < lo <= hi");
  };
  positive_range(sat_range, "sat_range");
  positive_range(val_range, "val_range");
  positive_range(aspect_range, "aspect_range");
  positive_range(zoom_scale_range, "zoom_scale_range");
  if (zoom_scale_range.hi > 1.0) throw Error(ErrorKind::kInvalidArgument, "zoom_scale_range must not exceed 1");
  if (!(blur_sigma_range.lo >= 0.0 && blur_sigma_range.lo <= blur_sigma_range.hi)) {
    throw Error(ErrorKind::kInvalidArgument, "blur_sigma_range must satisfy 0 <= lo <= hi");
  }
  if (!(hue_delta >= 0.0 && hue_delta <= 0.5)) throw Error(ErrorKind::kInvalidArgument, "hue_delta must be in [0,0.5]");
  const auto [qlo, qhi] = jpeg_quality_range;
  if (qlo < 1 || qhi > 100 || qlo > qhi) throw Error(ErrorKind::kInvalidArgument, "jpeg_quality_range must satisfy 1 <= lo <= hi <= 100");
  if (interpolations.empty()) throw Error(ErrorKind::kInvalidArgument, "interpolations must not be empty");
  if (output_size < 1) throw Error(ErrorKind::kInvalidArgument, "output_size must be positive");
}

double AppliedTransform::param(std::string_view key) const {
  for (const auto& [k, v] : params) {
    if (k == key) return v;
  }
  throw Error(ErrorKind::kInvalidArgument, "transform '" + name + "' has no parameter '" + std::string(key) + "'");
}

bool AugmentLog::applied(std::string_view name) const { return find(name) != nullptr; }

const AppliedTransform* AugmentLog::find(std::string_view name) const {
  for (const auto& t : transforms) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::string AugmentLog::to_json() const {
  nlohmann::ordered_json j;
  j["sample_index"] = sample_index;
  j["transforms"] = nlohmann::ordered_json::array();
  for (const auto& t : transforms) {
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (const auto& [k, v] : t.params) params[k] = v;
    j["transforms"].push_back({{"name", t.name}, {"params", params}});
  }
  return j.dump();
}

AugmentLog AugmentLog::from_json(const std::string& text) {
  AugmentLog log;
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    log.sample_index = j.at("sample_index").get<std::uint64_t>();
    for (const auto& t : j.at("transforms")) {
      AppliedTransform at;
      at.name = t.at("name").get<std::string>();
      for (const auto& [k, v] : t.at("params").items()) at.params.emplace_back(k, v.get<double>());
      log.transforms.push_back(std::move(at));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, std::string("augment log JSON: ") + e.what());
  }
  return log;
}

ViewGeometry ViewGeometry::from_log(const AugmentLog& log, int src_w, int src_h) {
  ViewGeometry g;
  g.window = {0.0, 0.0, static_cast<double>(src_w), static_cast<double>(src_h)};
  if (const auto* cz = log.find("crop_zoom")) g.window = {cz->param("x0"), cz->param("y0"), cz->param("w"), cz->param("h")};
  const auto* rs = log.find("resize");
  g.out_w = rs ? static_cast<int>(rs->param("w")) : src_w;
  g.out_h = rs ? static_cast<int>(rs->param("h")) : src_h;
  g.flipped_h = log.applied("flip_h");
  g.flipped_v = log.applied("flip_v");
  return g;
}

std::pair<double, double> ViewGeometry::map_point(double x, double y) const {
  double u = (x - window.x0) / window.w * out_w;
  double v = (y - window.y0) / window.h * out_h;
  if (flipped_h) u = out_w - u;
  if (flipped_v) v = out_h - v;
  return {u, v};
}

Box ViewGeometry::map_box(const Box& b) const {
  const auto [ax, ay] = map_point(b.x0, b.y0);
  const auto [bx, by] = map_point(b.x0 + b.w, b.y0 + b.h);
  return {std::min(ax, bx), std::min(ay, by), std::abs(bx - ax), std::abs(by - ay)};
}

AugmentResult augment(const Image& img, const AugmentConfig& cfg, std::uint64_t sample_index,
                      std::optional<std::pair<double, double>> keep) {
  cfg.validate();
  AugmentLog log;
  log.sample_index = sample_index;
  auto push = [&](std::string name, std::vector<std::pair<std::string, double>> params) {
    log.transforms.push_back({std::move(name), std::move(params)});
  };

  const int w = img.width(), h = img.height();
  bool zoomed = false;
  {
    auto rng = step_rng(cfg, sample_index, kCropZoom);
    if (rng.bernoulli(cfg.p_crop_zoom)) {
      zoomed = true;
      const double s = rng.uniform(cfg.zoom_scale_range.lo, cfg.zoom_scale_range.hi);
      const int ww = std::min(w, round_side(s * w));
      const int wh = std::min(h, round_side(s * h));
      int x_lo = 0, x_hi = w - ww, y_lo = 0, y_hi = h - wh;
      if (keep) {
        // x0 <= kx < x0 + ww
        const double kx = std::clamp(keep->first, 0.0, w - 1e-9);
        const double ky = std::clamp(keep->second, 0.0, h - 1e-9);
        x_lo = std::max(x_lo, static_cast<int>(std::floor(kx - ww)) + 1);
        x_hi = std::min(x_hi, static_cast<int>(std::floor(kx)));
        y_lo = std::max(y_lo, static_cast<int>(std::floor(ky - wh)) + 1);
        y_hi = std::min(y_hi, static_cast<int>(std::floor(ky)));
      }
      const auto x0 = static_cast<double>(rng.uniform_int(x_lo, x_hi));
      const auto y0 = static_cast<double>(rng.uniform_int(y_lo, y_hi));
      push("crop_zoom", {{"x0", x0}, {"y0", y0}, {"w", ww}, {"h", wh}});
      const double ax = rng.uniform(cfg.aspect_range.lo, cfg.aspect_range.hi);
      const double ay = rng.uniform(cfg.aspect_range.lo, cfg.aspect_range.hi);
      const Interpolation m = draw_interpolation(rng, cfg.interpolations);
      push("aspect", {{"w", round_side(ww * ax)}, {"h", round_side(wh * ay)}, {"interpolation", interp_code(m)}});
    }
  }
  {
    auto rng = step_rng(cfg, sample_index, kResize);
    const Interpolation m = zoomed ? draw_interpolation(rng, cfg.interpolations) : Interpolation::kBilinear;
    push("resize", {{"w", cfg.output_size}, {"h", cfg.output_size}, {"interpolation", interp_code(m)}});
  }
  if (auto rng = step_rng(cfg, sample_index, kFlipH); rng.bernoulli(cfg.p_flip_h)) push("flip_h", {});
  if (auto rng = step_rng(cfg, sample_index, kFlipV); rng.bernoulli(cfg.p_flip_v)) push("flip_v", {});
  if (auto rng = step_rng(cfg, sample_index, kJpeg); rng.bernoulli(cfg.p_jpeg)) {
    const auto q = rng.uniform_int(cfg.jpeg_quality_range.first, cfg.jpeg_quality_range.second);
    push("jpeg", {{"quality", static_cast<double>(q)}});
  }
  {
    auto rng = step_rng(cfg, sample_index, kJitter);
    const double hue = rng.uniform(-cfg.hue_delta, cfg.hue_delta);
    const double sat = rng.uniform(cfg.sat_range.lo, cfg.sat_range.hi);
    const double val = rng.uniform(cfg.val_range.lo, cfg.val_range.hi);
    if (hue != 0.0 || sat != 1.0 || val != 1.0) {
      push("hsv_jitter", {{"hue_delta", hue}, {"sat_scale", sat}, {"val_scale", val}});
    }
  }
  if (auto rng = step_rng(cfg, sample_index, kBlur); rng.bernoulli(cfg.p_blur)) {
    const double sigma = rng.uniform(cfg.blur_sigma_range.lo, cfg.blur_sigma_range.hi);
    if (sigma > 0.0) push("gaussian_blur", {{"sigma", sigma}});
  }

  return {replay(img, log), std::move(log)};
}

Image replay(const Image& img, const AugmentLog& log) {
  Image out = img;
  for (const auto& t : log.transforms) out = apply(out, t);
  return out;
}

CropSpec sample_crop(int width, int height, std::uint64_t rng_key) {
  if (width < kMinCropSource || height < kMinCropSource) {
    throw Error(ErrorKind::kInvalidArgument, "image " + std::to_string(width) + "x" + std::to_string(height) +
                                                 " is smaller than the minimum crop source of " +
                                                 std::to_string(kMinCropSource) + " px per side");
  }
  CounterRng rng(rng_key);
  CropSpec spec;
  spec.w = std::clamp(static_cast<int>(std::lround(width * rng.uniform(kCropSideMin, kCropSideMax))), 1, width);
  spec.h = std::clamp(static_cast<int>(std::lround(height * rng.uniform(kCropSideMin, kCropSideMax))), 1, height);
  spec.x0 = static_cast<int>(rng.uniform_int(0, width - spec.w));
  spec.y0 = static_cast<int>(rng.uniform_int(0, height - spec.h));
  return spec;
}

}  // namespace gridseek::imops
