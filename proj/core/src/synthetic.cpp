#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>

#include <json.hpp>

#include "gridseek/binary_io.hpp"
#include "gridseek/data.hpp"
#include "gridseek/rng.hpp"

namespace gridseek::data {

std::string_view to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "circle";
}

double ShapeInfo::area() const {
  switch (kind) {
    case ShapeKind::kCircle: return std::numbers::pi * size * size / 4.0;
    case ShapeKind::kSquare: return size * size;
    case ShapeKind::kTriangle: return size * size / 2.0;
  }
  return 0.0;
}

bool ShapeInfo::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy, half = size / 2.0;
  switch (kind) {
    case ShapeKind::kCircle: return dx * dx + dy * dy <= half * half;
    case ShapeKind::kSquare: return std::abs(dx) <= half && std::abs(dy) <= half;
    case ShapeKind::kTriangle: {
      // Apex up, base at the bottom; height equals the base.
      if (dy < -half || dy > half) return false;
      return std::abs(dx) <= (dy + half) / 2.0;
    }
  }
  return false;
}

namespace {

float q8(double v) { return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f; }

std::array<double, 3> hsv_color(double h, double s, double v) {
  std::array<double, 3> rgb;
  imops::hsv_to_rgb({h, s, v}, rgb[0], rgb[1], rgb[2]);
  return rgb;
}

double hue_distance(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

SyntheticImage render_one(int index, int size, std::uint64_t seed) {
  CounterRng rng(seed, static_cast<std::uint64_t>(index));
  const double s = size;

  // Background: bilinear blend of four corner colours, a faint grating and
  // pixel noise. Corner hues are spread around the wheel so that every
  // position has its own colour.
  const double hue0 = rng.uniform();
  std::array<std::array<double, 3>, 4> corner;
  for (std::size_t k = 0; k < 4; ++k) {
    const double hue = hue0 + 0.25 * static_cast<double>(k) + rng.uniform(-0.06, 0.06);
    corner[k] = hsv_color(hue - std::floor(hue), rng.uniform(0.25, 0.6), rng.uniform(0.4, 0.85));
  }
  const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double freq = rng.uniform(3.0, 8.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const std::uint64_t noise_key = rng.next_u64();

  imops::Image img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / s, v = (y + 0.5) / s;
      const double px = x + 0.5 - s / 2, py = y + 0.5 - s / 2;
      const double grating =
          0.04 * std::sin(2.0 * std::numbers::pi * freq * (px * std::cos(phi) + py * std::sin(phi)) / s + phase);
      CounterRng noise(hash_key({noise_key, static_cast<std::uint64_t>(y * size + x)}));
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = (1 - u) * (1 - v) * corner[0][c] + u * (1 - v) * corner[1][c] +
                            u * v * corner[2][c] + (1 - u) * v * corner[3][c];
        img.at(x, y, static_cast<int>(c)) = q8(base + grating + noise.uniform(-0.015, 0.015));
      }
    }
  }

  SyntheticImage out;
  char id[32];
  std::snprintf(id, sizeof(id), "img_%05d", index);
  out.image_id = id;

  const int count = static_cast<int>(rng.uniform_int(1, 3));
  const double max_frac = count == 1 ? 0.40 : (count == 2 ? 0.25 : 0.15);
  std::vector<unsigned char> occupied(static_cast<std::size_t>(size * size), 0);
  std::vector<double> hues;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      ShapeInfo shape{};
      shape.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
      const double area = rng.uniform(0.10, max_frac) * s * s;
      switch (shape.kind) {
        case ShapeKind::kCircle: shape.size = 2.0 * std::sqrt(area / std::numbers::pi); break;
        case ShapeKind::kSquare: shape.size = std::sqrt(area); break;
        case ShapeKind::kTriangle: shape.size = std::sqrt(2.0 * area); break;
      }
      const double half = shape.size / 2.0;
      shape.cx = rng.uniform(half + 1.0, s - half - 1.0);
      shape.cy = rng.uniform(half + 1.0, s - half - 1.0);

      // Pixels of this shape plus a one-pixel margin must be free.
      bool clash = false;
      for (int y = 0; y < size && !clash; ++y) {
        for (int x = 0; x < size && !clash; ++x) {
          if (!occupied[static_cast<std::size_t>(y * size + x)]) continue;
          for (int oy = -1; oy <= 1 && !clash; ++oy) {
            for (int ox = -1; ox <= 1 && !clash; ++ox) clash = shape.contains(x + ox + 0.5, y + oy + 0.5);
          }
        }
      }
      if (clash) continue;

      double hue = rng.uniform();
      for (int tries = 0; tries < 64; ++tries) {
        bool ok = true;
        for (double h : hues) ok = ok && hue_distance(h, hue) >= 0.12;
        if (ok) break;
        hue = rng.uniform();
      }
      hues.push_back(hue);
      const auto rgb = hsv_color(hue, rng.uniform(0.85, 1.0), rng.uniform(0.85, 1.0));
      shape.rgb = {q8(rgb[0]), q8(rgb[1]), q8(rgb[2])};

      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          if (!shape.contains(x + 0.5, y + 0.5)) continue;
          occupied[static_cast<std::size_t>(y * size + x)] = 1;
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = shape.rgb[static_cast<std::size_t>(c)];
        }
      }
      out.shapes.push_back(shape);
      placed = true;
    }
  }
  out.image = std::move(img);
  return out;
}

}  // namespace

std::vector<SyntheticImage> render_synthetic(int n, int size, std::uint64_t seed) {
  if (n < 2) throw Error(ErrorKind::kInvalidArgument, "synthetic dataset needs at least 2 images");
  if (size < imops::kMinCropSource) {
    throw Error(ErrorKind::kInvalidArgument, "synthetic image size must be at least " + std::to_string(imops::kMinCropSource));
  }
  std::vector<SyntheticImage> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(render_one(i, size, seed));
  return out;
}

std::string manifest_json(const std::vector<SyntheticImage>& images) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& im : images) {
    nlohmann::ordered_json shapes = nlohmann::ordered_json::array();
    for (const auto& s : im.shapes) {
      shapes.push_back({{"kind", to_string(s.kind)},
                        {"center", {s.cx, s.cy}},
                        {"size", s.size},
                        {"rgb", {s.rgb[0], s.rgb[1], s.rgb[2]}}});
    }
    j.push_back({{"image_id", im.image_id}, {"shapes", shapes}});
  }
  return j.dump(2) + "\n";
}

Dataset gen_synthetic(int n, int size, std::uint64_t seed, const std::string& out_dir) {
  const auto images = render_synthetic(n, size, seed);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::kIo, "cannot create " + out_dir + ": " + ec.message());
  Dataset ds;
  ds.root = out_dir;
  for (const auto& im : images) {
    const auto path = (std::filesystem::path(out_dir) / (im.image_id + ".png")).string();
    imops::write_png(im.image, path);
    ds.items.push_back({im.image_id, path});
  }
  const auto manifest = manifest_json(images);
  write_file((std::filesystem::path(out_dir) / "manifest.json").string(), std::span(manifest.data(), manifest.size()));
  return ds;
}

}  // namespace gridseek::data
