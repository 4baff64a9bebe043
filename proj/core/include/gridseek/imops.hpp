#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gridseek/error.hpp"

namespace gridseek::imops {

// Interleaved RGB, row-major, channel values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0f);
  Image(int width, int height, std::vector<float> rgb);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }

  float at(int x, int y, int c) const { return pixels_[index(x, y, c)]; }
  float& at(int x, int y, int c) { return pixels_[index(x, y, c)]; }

  std::span<const float> pixels() const noexcept { return pixels_; }
  std::span<float> pixels() noexcept { return pixels_; }

  // Throws kOutOfBounds when any channel leaves [0, 1] or is non-finite.
  void validate() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3 +
           static_cast<std::size_t>(c);
  }
  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

struct CropSpec {
  int x0 = 0;
  int y0 = 0;
  int w = 1;
  int h = 1;
  std::string source_id;

  friend bool operator==(const CropSpec&, const CropSpec&) = default;
};

// Axis-aligned rectangle in continuous pixel coordinates.
struct Box {
  double x0 = 0, y0 = 0, w = 0, h = 0;
  double cx() const { return x0 + w / 2; }
  double cy() const { return y0 + h / 2; }
  // Half-open containment: [x0, x0+w) x [y0, y0+h).
  bool contains(double x, double y) const { return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h; }
  static Box from(const CropSpec& c) { return {double(c.x0), double(c.y0), double(c.w), double(c.h)}; }
};

bool crop_in_bounds(const CropSpec& spec, int width, int height);

enum class Interpolation { kNearest, kBilinear, kBicubic };
std::string_view to_string(Interpolation m);
Interpolation parse_interpolation(std::string_view name);

Image resize(const Image& img, int new_w, int new_h, Interpolation mode);
Image flip_h(const Image& img);
Image flip_v(const Image& img);
Image crop(const Image& img, const CropSpec& spec);

// Scalar colour conversions (all components in [0, 1], hue wraps mod 1).
struct Hsv {
  double h, s, v;
};
Hsv rgb_to_hsv(double r, double g, double b);
void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b);

Image hsv_jitter(const Image& img, double hue_delta, double sat_scale, double val_scale);
Image gaussian_blur(const Image& img, double sigma);
std::vector<double> gaussian_kernel(double sigma);

// Baseline JPEG encode at `quality` then decode.
Image jpeg_roundtrip(const Image& img, int quality);

double psnr(const Image& a, const Image& b);

// ---------------------------------------------------------------------------
// codecs

Image decode_image(std::span<const unsigned char> bytes);  // PNG or baseline JPEG
Image read_image(const std::string& path);
std::vector<unsigned char> encode_png(const Image& img);
std::vector<unsigned char> encode_jpeg(const Image& img, int quality);
void write_png(const Image& img, const std::string& path);
void write_ppm(const Image& img, const std::string& path);
std::string base64_encode(std::span<const unsigned char> bytes);

// ---------------------------------------------------------------------------
// augmentation

struct Range {
  double lo = 0.0, hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

struct AugmentConfig {
  double p_crop_zoom = 0.65;
  double p_flip_h = 0.5;
  double p_flip_v = 0.5;
  double p_jpeg = 0.7;
  double p_blur = 0.3;
  double hue_delta = 0.1;
  Range sat_range{0.7, 1.3};
  Range val_range{0.7, 1.3};
  Range blur_sigma_range{0.1, 1.0};
  std::vector<Interpolation> interpolations{Interpolation::kBilinear};
  std::pair<int, int> jpeg_quality_range{30, 90};
  Range zoom_scale_range{0.5, 1.0};
  Range aspect_range{0.8, 1.25};
  int output_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const AugmentConfig&, const AugmentConfig&) = default;
};

struct AppliedTransform {
  std::string name;
  std::vector<std::pair<std::string, double>> params;

  double param(std::string_view key) const;
  friend bool operator==(const AppliedTransform&, const AppliedTransform&) = default;
};

struct AugmentLog {
  std::uint64_t sample_index = 0;
  std::vector<AppliedTransform> transforms;

  bool applied(std::string_view name) const;
  const AppliedTransform* find(std::string_view name) const;

  std::string to_json() const;
  static AugmentLog from_json(const std::string& text);
  friend bool operator==(const AugmentLog&, const AugmentLog&) = default;
};

// Geometry of the augmented view relative to its source: the source window
// that was kept, the output raster size and the flips.
struct ViewGeometry {
  Box window;
  int out_w = 0, out_h = 0;
  bool flipped_h = false, flipped_v = false;

  static ViewGeometry from_log(const AugmentLog& log, int src_w, int src_h);
  std::pair<double, double> map_point(double x, double y) const;
  Box map_box(const Box& b) const;
};

struct AugmentResult {
  Image image;
  AugmentLog log;
};

// Crop/zoom (window, aspect distortion) -> resize to output_size -> flips ->
// JPEG -> HSV jitter -> blur. Every decision is drawn from a counter-based
// stream keyed by (cfg.seed, sample_index). When `keep` is given the zoom
// window is placed so that point of the source stays in view.
AugmentResult augment(const Image& img, const AugmentConfig& cfg, std::uint64_t sample_index,
                      std::optional<std::pair<double, double>> keep = std::nullopt);

// Re-applies a logged transform sequence.
Image replay(const Image& img, const AugmentLog& log);

inline constexpr int kMinCropSource = 16;
inline constexpr double kCropSideMin = 0.25;
inline constexpr double kCropSideMax = 0.60;

// Side lengths uniform in [25%, 60%] of each dimension, placement uniform.
CropSpec sample_crop(int width, int height, std::uint64_t rng_key);
inline CropSpec sample_crop(const Image& img, std::uint64_t rng_key) {
  return sample_crop(img.width(), img.height(), rng_key);
}

}  // namespace gridseek::imops
