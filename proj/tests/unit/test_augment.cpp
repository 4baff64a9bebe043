#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "gridseek/imops.hpp"
#include "gridseek/rng.hpp"
#include "testing.hpp"

namespace gridseek {
namespace {

using imops::AugmentConfig;
using imops::Image;

Image noise_image(int w, int h, std::uint64_t seed) {
  CounterRng rng(seed);
  Image img(w, h);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

TEST(Augment, DisabledPipelineIsAPlainResize) {
  AugmentConfig cfg;
  cfg.p_crop_zoom = cfg.p_flip_h = cfg.p_flip_v = cfg.p_jpeg = cfg.p_blur = 0.0;
  cfg.hue_delta = 0.0;
  cfg.sat_range = cfg.val_range = {1.0, 1.0};
  const auto img = noise_image(40, 30, 1);
  const auto out = imops::augment(img, cfg, 17);
  EXPECT_EQ(out.image, imops::resize(img, 64, 64, imops::Interpolation::kBilinear));
  ASSERT_EQ(out.log.transforms.size(), 1u);
  EXPECT_EQ(out.log.transforms[0].name, "resize");
}

TEST(Augment, DeterministicAndReplayable) {
  AugmentConfig cfg;
  cfg.interpolations = {imops::Interpolation::kNearest, imops::Interpolation::kBilinear,
                        imops::Interpolation::kBicubic};
  cfg.seed = 99;
  const auto img = noise_image(50, 44, 2);
  for (std::uint64_t i = 0; i < 50; ++i) {
    const auto a = imops::augment(img, cfg, i);
    const auto b = imops::augment(img, cfg, i);
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.log, b.log);
    EXPECT_EQ(imops::replay(img, a.log), a.image);
    const auto parsed = imops::AugmentLog::from_json(a.log.to_json());
    EXPECT_EQ(imops::replay(img, parsed), a.image) << a.log.to_json();
    EXPECT_NO_THROW(a.image.validate());
    EXPECT_EQ(a.image.width(), 64);
    EXPECT_EQ(a.image.height(), 64);
  }
}

TEST(Augment, DifferentSeedsDiffer) {
  AugmentConfig a, b;
  b.seed = 1;
  const auto img = noise_image(32, 32, 3);
  int differ = 0;
  for (std::uint64_t i = 0; i < 20; ++i) differ += imops::augment(img, a, i).log == imops::augment(img, b, i).log ? 0 : 1;
  EXPECT_GT(differ, 15);
}

TEST(Augment, ApplicationFrequencies) {
  AugmentConfig cfg;
  cfg.output_size = 16;
  cfg.seed = 2024;
  const auto img = noise_image(16, 16, 4);
  const int n = 10000;
  std::map<std::string, int> counts;
  std::map<double, int> qualities;
  for (int i = 0; i < n; ++i) {
    const auto log = imops::augment(img, cfg, static_cast<std::uint64_t>(i)).log;
    for (const auto& t : log.transforms) ++counts[t.name];
    if (const auto* j = log.find("jpeg")) {
      const double q = j->param("quality");
      EXPECT_GE(q, 30);
      EXPECT_LE(q, 90);
      ++qualities[q];
    }
  }
  EXPECT_NEAR(counts["crop_zoom"] / double(n), 0.65, 0.03);
  EXPECT_NEAR(counts["flip_h"] / double(n), 0.5, 0.03);
  EXPECT_NEAR(counts["flip_v"] / double(n), 0.5, 0.03);
  EXPECT_NEAR(counts["jpeg"] / double(n), 0.7, 0.03);
  EXPECT_NEAR(counts["gaussian_blur"] / double(n), 0.3, 0.03);
  EXPECT_EQ(counts["aspect"], counts["crop_zoom"]);
  EXPECT_EQ(qualities.size(), 61u);  // every integer quality in [30, 90] occurs
}

TEST(Augment, InterpolationDrawnFromConfiguredSet) {
  AugmentConfig cfg;
  cfg.p_crop_zoom = 1.0;
  cfg.interpolations = {imops::Interpolation::kNearest, imops::Interpolation::kBicubic};
  const auto img = noise_image(24, 24, 5);
  std::map<double, int> seen;
  for (std::uint64_t i = 0; i < 600; ++i) {
    const auto log = imops::augment(img, cfg, i).log;
    ++seen[log.find("aspect")->param("interpolation")];
    ++seen[log.find("resize")->param("interpolation")];
  }
  EXPECT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen.count(static_cast<double>(imops::Interpolation::kBilinear)), 0u);
  for (const auto& [code, count] : seen) EXPECT_NEAR(count / 1200.0, 0.5, 0.06) << code;
}

TEST(Augment, KeepPointStaysInsideTheView) {
  AugmentConfig cfg;
  cfg.p_crop_zoom = 1.0;
  cfg.zoom_scale_range = {0.5, 0.5};
  const auto img = noise_image(80, 60, 6);
  for (std::uint64_t i = 0; i < 500; ++i) {
    CounterRng rng(hash_key({7, i}));
    const double kx = rng.uniform(0, 80), ky = rng.uniform(0, 60);
    const auto res = imops::augment(img, cfg, i, std::make_pair(kx, ky));
    const auto geom = imops::ViewGeometry::from_log(res.log, 80, 60);
    EXPECT_TRUE(geom.window.contains(kx, ky)) << i;
    const auto [u, v] = geom.map_point(kx, ky);
    EXPECT_GE(u, 0);
    EXPECT_LE(u, 64);
    EXPECT_GE(v, 0);
    EXPECT_LE(v, 64);
  }
}

TEST(ViewGeometry, MapsSourcePixelsToWhereTheyLand) {
  // Colour-coded positions survive geometric transforms, so reading the
  // colour at a mapped point recovers the source coordinate.
  AugmentConfig cfg;
  cfg.p_jpeg = cfg.p_blur = 0.0;
  cfg.hue_delta = 0.0;
  cfg.sat_range = cfg.val_range = {1.0, 1.0};
  cfg.p_crop_zoom = 0.8;
  const auto img = testing::position_image(80, 64);
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 300; ++i) {
    const auto res = imops::augment(img, cfg, i);
    const auto geom = imops::ViewGeometry::from_log(res.log, 80, 64);
    CounterRng rng(hash_key({11, i}));
    for (int k = 0; k < 10; ++k) {
      const double sx = rng.uniform(geom.window.x0 + 2, geom.window.x0 + geom.window.w - 2);
      const double sy = rng.uniform(geom.window.y0 + 2, geom.window.y0 + geom.window.h - 2);
      const auto [u, v] = geom.map_point(sx, sy);
      const int px = std::clamp(static_cast<int>(u), 0, 63), py = std::clamp(static_cast<int>(v), 0, 63);
      const double rx = res.image.at(px, py, 0) * 80.0, ry = res.image.at(px, py, 1) * 64.0;
      worst = std::max(worst, std::hypot(rx - sx, ry - sy));
    }
  }
  EXPECT_LT(worst, 1.5);
}

TEST(ViewGeometry, MapBoxHandlesFlips) {
  imops::ViewGeometry g{{10, 20, 40, 20}, 80, 40, true, true};
  const auto b = g.map_box({10, 20, 10, 5});
  EXPECT_DOUBLE_EQ(b.x0, 60);
  EXPECT_DOUBLE_EQ(b.y0, 30);
  EXPECT_DOUBLE_EQ(b.w, 20);
  EXPECT_DOUBLE_EQ(b.h, 10);
}

TEST(AugmentConfig, ValidationRejectsBadValues) {
  AugmentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.p_jpeg = 1.2;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.jpeg_quality_range = {50, 40};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.sat_range = {0.0, 1.0};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.interpolations.clear();
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace gridseek
