#include <algorithm>
#include <cmath>

#include "gridseek/imops.hpp"

namespace gridseek::imops {

Image::Image(int width, int height, float fill) {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::kInvalidArgument, "image dimensions must be positive, got " + std::to_string(width) + "x" +
                                                 std::to_string(height));
  }
  width_ = width;
  height_ = height;
  pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3, fill);
}

Image::Image(int width, int height, std::vector<float> rgb) : Image(width, height) {
  if (rgb.size() != pixels_.size()) {
    throw Error(ErrorKind::kShapeMismatch, "expected " + std::to_string(pixels_.size()) + " channel values, got " +
                                               std::to_string(rgb.size()));
  }
  pixels_ = std::move(rgb);
}

void Image::validate() const {
  if (width_ <= 0 || height_ <= 0) throw Error(ErrorKind::kInvalidArgument, "empty image");
  for (std::size_t i = 0; i < pixels_.size(); ++i) {
    const float v = pixels_[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorKind::kOutOfBounds, "channel value " + std::to_string(v) + " at offset " + std::to_string(i));
    }
  }
}

bool crop_in_bounds(const CropSpec& s, int width, int height) {
  return s.x0 >= 0 && s.y0 >= 0 && s.w > 0 && s.h > 0 && s.x0 + s.w <= width && s.y0 + s.h <= height;
}

std::string_view to_string(Interpolation m) {
  switch (m) {
    case Interpolation::kNearest: return "nearest";
    case Interpolation::kBilinear: return "bilinear";
    case Interpolation::kBicubic: return "bicubic";
  }
  return "bilinear";
}

Interpolation parse_interpolation(std::string_view name) {
  if (name == "nearest") return Interpolation::kNearest;
  if (name == "bilinear") return Interpolation::kBilinear;
  if (name == "bicubic") return Interpolation::kBicubic;
  throw Error(ErrorKind::kInvalidArgument, "unknown interpolation '" + std::string(name) + "'");
}

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

// Keys cubic convolution kernel, a = -0.5.
double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct Tap {
  int index;
  double weight;
};

// Source taps for each destination coordinate along one axis, using
// half-pixel-centre alignment.
std::vector<std::vector<Tap>> axis_taps(int src, int dst, Interpolation mode) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(dst));
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  auto clampi = [src](int i) { return std::clamp(i, 0, src - 1); };
  for (int d = 0; d < dst; ++d) {
    auto& t = taps[static_cast<std::size_t>(d)];
    if (mode == Interpolation::kNearest) {
      t.push_back({clampi(static_cast<int>(std::floor((d + 0.5) * scale))), 1.0});
      continue;
    }
    const double f = (d + 0.5) * scale - 0.5;
    const int base = static_cast<int>(std::floor(f));
    const double frac = f - base;
    if (mode == Interpolation::kBilinear) {
      t.push_back({clampi(base), 1.0 - frac});
      t.push_back({clampi(base + 1), frac});
    } else {
      for (int k = -1; k <= 2; ++k) t.push_back({clampi(base + k), cubic_weight(frac - k)});
    }
  }
  return taps;
}

}  // namespace

Image resize(const Image& img, int new_w, int new_h, Interpolation mode) {
  if (new_w < 1 || new_h < 1) throw Error(ErrorKind::kInvalidArgument, "resize target must be at least 1x1");
  const int w = img.width(), h = img.height();
  const auto xt = axis_taps(w, new_w, mode);
  const auto yt = axis_taps(h, new_h, mode);

  // Horizontal pass into a double buffer, then vertical.
  std::vector<double> tmp(static_cast<std::size_t>(new_w) * static_cast<std::size_t>(h) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < new_w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (const auto& tap : xt[static_cast<std::size_t>(x)]) acc += tap.weight * img.at(tap.index, y, c);
        tmp[(static_cast<std::size_t>(y) * new_w + x) * 3 + c] = acc;
      }
    }
  }
  Image out(new_w, new_h);
  for (int y = 0; y < new_h; ++y) {
    for (int x = 0; x < new_w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (const auto& tap : yt[static_cast<std::size_t>(y)]) {
          acc += tap.weight * tmp[(static_cast<std::size_t>(tap.index) * new_w + x) * 3 + c];
        }
        out.at(x, y, c) = clamp01(acc);
      }
    }
  }
  return out;
}

Image flip_h(const Image& img) {
  Image out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(img.width() - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

Image flip_v(const Image& img) {
  Image out(img.width(), img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, img.height() - 1 - y, c) = img.at(x, y, c);
    }
  }
  return out;
}

Image crop(const Image& img, const CropSpec& spec) {
  if (!crop_in_bounds(spec, img.width(), img.height())) {
    throw Error(ErrorKind::kOutOfBounds, "crop (" + std::to_string(spec.x0) + "," + std::to_string(spec.y0) + "," +
                                             std::to_string(spec.w) + "," + std::to_string(spec.h) +
                                             ") outside " + std::to_string(img.width()) + "x" +
                                             std::to_string(img.height()));
  }
  Image out(spec.w, spec.h);
  for (int y = 0; y < spec.h; ++y) {
    for (int x = 0; x < spec.w; ++x) {
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(spec.x0 + x, spec.y0 + y, c);
    }
  }
  return out;
}

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out{0.0, 0.0, mx};
  if (mx <= 0.0) return out;
  out.s = delta / mx;
  if (delta <= 0.0) return out;
  double h;
  if (mx == r) {
    h = (g - b) / delta;
  } else if (mx == g) {
    h = 2.0 + (b - r) / delta;
  } else {
    h = 4.0 + (r - g) / delta;
  }
  h /= 6.0;
  if (h < 0.0) h += 1.0;
  out.h = h;
  return out;
}

void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b) {
  const double s = hsv.s, v = hsv.v;
  if (s <= 0.0) {
    r = g = b = v;
    return;
  }
  double h = hsv.h - std::floor(hsv.h);
  h *= 6.0;
  const int sector = std::min(static_cast<int>(h), 5);
  const double f = h - sector;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

Image hsv_jitter(const Image& img, double hue_delta, double sat_scale, double val_scale) {
  if (!(sat_scale > 0.0) || !(val_scale > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "hsv_jitter scales must be positive");
  }
  Image out(img.width(), img.height());
  const auto src = img.pixels();
  auto dst = out.pixels();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    Hsv hsv = rgb_to_hsv(src[i], src[i + 1], src[i + 2]);
    hsv.h = hsv.h + hue_delta;
    hsv.h -= std::floor(hsv.h);
    hsv.s = std::clamp(hsv.s * sat_scale, 0.0, 1.0);
    hsv.v = std::clamp(hsv.v * val_scale, 0.0, 1.0);
    double r, g, b;
    hsv_to_rgb(hsv, r, g, b);
    dst[i] = clamp01(r);
    dst[i + 1] = clamp01(g);
    dst[i + 2] = clamp01(b);
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return {1.0};
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma < 0.0) throw Error(ErrorKind::kInvalidArgument, "blur sigma must be non-negative");
  if (sigma == 0.0) return img;
  const auto k = gaussian_kernel(sigma);
  const int radius = static_cast<int>(k.size() / 2);
  const int w = img.width(), h = img.height();
  std::vector<double> tmp(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] * img.at(std::clamp(x + i, 0, w - 1), y, c);
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
      }
    }
  }
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] *
                 tmp[(static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x) * 3 + c];
        }
        out.at(x, y, c) = clamp01(acc);
      }
    }
  }
  return out;
}

Image jpeg_roundtrip(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw Error(ErrorKind::kInvalidArgument, "JPEG quality must be in [1, 100]");
  const auto bytes = encode_jpeg(img, quality);
  return decode_image(bytes);
}

double psnr(const Image& a, const Image& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorKind::kShapeMismatch, "psnr of differently sized images");
  }
  double mse = 0.0;
  const auto pa = a.pixels(), pb = b.pixels();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - pb[i];
    mse += d * d;
  }
  mse /= static_cast<double>(pa.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace gridseek::imops
