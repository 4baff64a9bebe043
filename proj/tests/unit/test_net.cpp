#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gridseek/net.hpp"
#include "gridseek/rng.hpp"
#include "testing.hpp"

namespace gridseek {
namespace {

using net::Model;
using net::ModelConfig;

ModelConfig small_config(bool head = true) {
  ModelConfig c;
  c.stem_channels = 4;
  c.stage_channels = {4, 6, 8};
  c.stage_depth = 1;
  c.pyramid_channels = 16;
  c.repr_dim = 16;
  c.embed_dim = 5;
  c.image_projection_head = head;
  c.seed = 3;
  return c;
}

imops::Image noise_image(int size, std::uint64_t seed) {
  CounterRng rng(seed);
  imops::Image img(size, size);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

// Parameter count from the architecture description alone.
std::size_t expected_params(const ModelConfig& c) {
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) { return cout * cin * k * k + cout; };
  auto dense = [](std::size_t din, std::size_t dout) { return dout * din + dout; };
  auto backbone = [&] {
    std::size_t n = conv(3, c.stem_channels, 3);
    std::size_t cin = c.stem_channels;
    for (int s : c.stage_channels) {
      n += conv(cin, s, 3);
      for (int d = 0; d < c.stage_depth; ++d) n += conv(s, s, 3);
      cin = s;
    }
    return n;
  };
  const std::size_t f = c.pyramid_channels;
  std::size_t n = backbone() + conv(c.stage_channels[2], c.repr_dim, 1) + dense(c.repr_dim, c.repr_dim) +
                  dense(c.repr_dim, c.embed_dim);
  n += backbone();
  for (int s : c.stage_channels) n += conv(s, f, 1) + conv(f, f, 3);
  n += conv(c.stage_channels[2], f, 3) + conv(f, f, 3);
  n += c.image_projection_head ? dense(f, f) + dense(f, c.embed_dim) : dense(f, c.embed_dim);
  return n;
}

TEST(Model, ParameterCountMatchesArchitecture) {
  for (bool head : {true, false}) {
    const auto cfg = small_config(head);
    EXPECT_EQ(Model(cfg).parameter_count(), expected_params(cfg));
  }
  EXPECT_EQ(Model(ModelConfig{}).parameter_count(), expected_params(ModelConfig{}));
}

TEST(Model, PipelinesShareNoParameters) {
  Model m(small_config());
  std::set<std::string> names;
  for (const auto& p : m.parameters()) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    const bool crop = p.name.rfind("crop.", 0) == 0, image = p.name.rfind("image.", 0) == 0;
    EXPECT_NE(crop, image) << p.name;
  }
  std::set<const void*> storage;
  for (const auto& p : m.parameters()) EXPECT_TRUE(storage.insert(p.tensor.impl().get()).second);
}

TEST(Model, EmbeddingsAreUnitAndGridsHaveExpectedShapes) {
  Model m(small_config());
  const auto img = noise_image(64, 1);
  const auto crop = noise_image(32, 2);
  EXPECT_NEAR(m.encode_crop(crop).norm(), 1.0, 1e-6);
  EXPECT_EQ(m.encode_crop(crop).dim(), 5u);
  const auto pyr = m.encode_image(img);
  const int expected[] = {16, 8, 4, 2, 1};
  for (int l = 0; l < net::kLevels; ++l) {
    const auto& g = pyr.grids[static_cast<std::size_t>(l)];
    EXPECT_EQ(g.level, l);
    EXPECT_EQ(g.rows, expected[l]);
    EXPECT_EQ(g.cols, expected[l]);
    EXPECT_EQ(g.dim, 5);
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c) {
        const auto cell = g.cell(r, c);
        double n = 0;
        for (double v : cell) n += v * v;
        EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
      }
    }
  }
  EXPECT_DOUBLE_EQ(pyr.grids[0].center_x(0), 2.0);
  EXPECT_DOUBLE_EQ(pyr.grids[4].center_y(0), 32.0);
}

TEST(Model, EncodingIsDeterministicAndSeedDependent) {
  const auto img = noise_image(64, 4);
  Model a(small_config()), b(small_config());
  EXPECT_EQ(a.encode_image(img).grids[1].cells, b.encode_image(img).grids[1].cells);
  auto cfg = small_config();
  cfg.seed = 4;
  Model c(cfg);
  EXPECT_NE(a.encode_image(img).grids[1].cells, c.encode_image(img).grids[1].cells);
}

TEST(Model, BatchedForwardMatchesSingleImage) {
  Model m(small_config());
  std::vector<imops::Image> imgs{noise_image(64, 5), noise_image(64, 6)};
  ndgrad::Tape tape(ndgrad::Tape::Mode::kInference);
  const auto out = m.forward_images(tape, net::images_to_tensor(imgs, 64));
  const auto second = net::to_pyramid(out, 1, 5);
  const auto single = m.encode_image(imgs[1]);
  for (int l = 0; l < net::kLevels; ++l) {
    const auto& a = second.grids[static_cast<std::size_t>(l)].cells;
    const auto& b = single.grids[static_cast<std::size_t>(l)].cells;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
  }
}

TEST(Model, OtherImageSizesAreResizedAndRawTensorsChecked) {
  Model m(small_config());
  const auto img = noise_image(48, 1);
  EXPECT_EQ(m.encode_image(img).grids[0].cells,
            m.encode_image(imops::resize(img, 64, 64, imops::Interpolation::kBilinear)).grids[0].cells);
  ndgrad::Tape tape(ndgrad::Tape::Mode::kInference);
  EXPECT_THROW(m.forward_images(tape, ndgrad::Tensor::zeros({1, 3, 48, 48})), Error);
  EXPECT_THROW(m.forward_crops(tape, ndgrad::Tensor::zeros({1, 3, 64, 64})), Error);
}

TEST(Model, SaveLoadSaveIsByteIdentical) {
  testing::TempDir dir("net");
  Model m(small_config(false));
  m.save(dir.file("a.gskw"));
  const auto loaded = Model::load(dir.file("a.gskw"));
  loaded.save(dir.file("b.gskw"));
  EXPECT_EQ(testing::read_text(dir.file("a.gskw")), testing::read_text(dir.file("b.gskw")));
  EXPECT_EQ(loaded.config().stage_channels, m.config().stage_channels);
  EXPECT_EQ(loaded.config().image_projection_head, false);
  const auto img = noise_image(64, 8);
  EXPECT_EQ(loaded.encode_image(img).grids[2].cells, m.encode_image(img).grids[2].cells);
}

TEST(Model, TruncatedCheckpointIsRejected) {
  testing::TempDir dir("net");
  Model m(small_config());
  m.save(dir.file("a.gskw"));
  auto bytes = testing::read_text(dir.file("a.gskw"));
  bytes.resize(bytes.size() / 2);
  try {
    ndgrad::decode_checkpoint(std::span(bytes.data(), bytes.size()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCorruptCheckpoint);
  }
}

TEST(Model, CropEmbeddingGradientsMatchFiniteDifferences) {
  ndgrad::PrecisionScope fp64(ndgrad::Precision::kFloat64);
  auto cfg = small_config();
  cfg.crop_size = 16;
  Model m(cfg);
  const auto target = testing::random_unit(5, 9);
  const auto x = testing::random_tensor({2, 3, 16, 16}, 10, -0.5, 0.5, false);
  const auto t = ndgrad::Tensor::from({1, 5}, target);
  std::vector<ndgrad::Tensor> leaves;
  for (const auto& p : m.parameters()) {
    if (p.name.rfind("crop.", 0) == 0) leaves.push_back(p.tensor);
  }
  const auto res = testing::gradcheck(
      [&](ndgrad::Tape& tape) {
        const auto z = m.forward_crops(tape, x).embedding;
        return ndgrad::ops::sum(tape, ndgrad::ops::linear(tape, z, t));
      },
      leaves, 1e-5, 12, 1);
  EXPECT_GT(res.checked, 0u);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(ModelConfig, ValidationRejectsNonsense) {
  auto c = small_config();
  c.image_size = 60;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.embed_dim = 0;
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace gridseek
