#pragma once

// The two encoders: Pipeline 1 embeds a query crop into a single unit vector,
// Pipeline 2 embeds the full image into a five-level pyramid of per-cell unit
// vectors. Both share the same embedding space but no parameters.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gridseek/imops.hpp"
#include "gridseek/ndgrad.hpp"

namespace gridseek::net {

using ndgrad::Parameter;
using ndgrad::Tape;
using ndgrad::Tensor;

enum class ModelVariant { kM1 = 1, kM2 = 2, kM3 = 3, kM4 = 4 };
std::string_view to_string(ModelVariant v);

inline constexpr int kLevels = 5;
// Level 0 is the finest grid (stride 4); the stride doubles per level.
constexpr int level_stride(int level) { return 4 << level; }

struct ModelConfig {
  int image_size = 64;
  int crop_size = 32;
  int stem_channels = 16;
  std::array<int, 3> stage_channels{16, 32, 64};
  // Extra stride-1 3x3 convolutions after each strided stage conv.
  int stage_depth = 1;
  int pyramid_channels = 32;
  int repr_dim = 128;
  int embed_dim = 32;
  bool image_projection_head = true;  // M4
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Unit-norm vector.
struct Embedding {
  std::vector<double> values;

  std::size_t dim() const { return values.size(); }
  double norm() const;
  // Divides by the Euclidean norm; throws kDegenerateEmbedding below 1e-12.
  static Embedding normalized(std::vector<double> v);
  friend bool operator==(const Embedding&, const Embedding&) = default;
};

struct EmbeddingGrid {
  int level = 0;
  int rows = 0;
  int cols = 0;
  int dim = 0;
  std::vector<double> cells;  // (row * cols + col) * dim

  std::span<const double> cell(int row, int col) const {
    return std::span<const double>(cells).subspan(static_cast<std::size_t>((row * cols + col) * dim),
                                                  static_cast<std::size_t>(dim));
  }
  Embedding embedding(int row, int col) const {
    const auto c = cell(row, col);
    return Embedding{{c.begin(), c.end()}};
  }
  // Centre of a cell in input-image pixels.
  double center_x(int col) const { return (col + 0.5) * level_stride(level); }
  double center_y(int row) const { return (row + 0.5) * level_stride(level); }
};

struct PyramidEmbeddings {
  std::array<EmbeddingGrid, kLevels> grids;
};

// Read-only encoding interface used by evaluation and indexing.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual int image_size() const = 0;
  virtual int embed_dim() const = 0;
  virtual Embedding encode_crop(const imops::Image& crop_img) const = 0;
  virtual PyramidEmbeddings encode_image(const imops::Image& img) const = 0;
};

// Packs images into a [B,3,H,W] tensor with channels shifted to [-0.5, 0.5].
// All images must be size x size.
Tensor images_to_tensor(std::span<const imops::Image> images, int size);

class Model final : public Encoder {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  int image_size() const override { return cfg_.image_size; }
  int embed_dim() const override { return cfg_.embed_dim; }

  struct CropOutput {
    Tensor representation;  // [B, repr_dim]
    Tensor embedding;       // [B, embed_dim], unit rows
  };
  CropOutput forward_crops(Tape& tape, const Tensor& crops) const;

  struct PyramidOutput {
    int batch = 0;
    std::array<int, kLevels> rows{};
    std::array<int, kLevels> cols{};
    // [batch * rows * cols, embed_dim], unit rows, row (b*rows + r)*cols + c.
    std::array<Tensor, kLevels> cells;
  };
  PyramidOutput forward_images(Tape& tape, const Tensor& images) const;

  Embedding encode_crop(const imops::Image& crop_img) const override;
  PyramidEmbeddings encode_image(const imops::Image& img) const override;

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  void save(const std::string& path) const;
  // Architecture is recovered from tensor names and shapes; only the input
  // sizes come from the caller.
  static Model load(const std::string& path, int image_size = 64, int crop_size = 32);
  static Model from_tensors(const std::vector<ndgrad::NamedTensor>& tensors, int image_size, int crop_size);

 private:
  struct Conv {
    std::size_t weight, bias;
    std::size_t stride, padding;
  };
  struct Dense {
    std::size_t weight, bias;
  };

  Conv add_conv(const std::string& name, int cin, int cout, int k, int stride);
  Dense add_dense(const std::string& name, int din, int dout);
  Tensor conv(Tape& tape, const Conv& c, const Tensor& x) const;
  Tensor dense(Tape& tape, const Dense& d, const Tensor& x) const;

  struct Backbone {
    Conv stem;
    std::vector<std::vector<Conv>> stages;
  };
  Backbone make_backbone(const std::string& prefix);
  std::array<Tensor, 3> run_backbone(Tape& tape, const Backbone& b, const Tensor& x) const;

  ModelConfig cfg_;
  std::vector<Parameter> params_;
  std::uint64_t init_counter_ = 0;

  Backbone crop_backbone_;
  Conv crop_expand_;
  Dense crop_fc1_, crop_fc2_;

  Backbone image_backbone_;
  std::array<Conv, 3> lateral_;
  std::array<Conv, 3> smooth_;
  Conv p3_, p4_;
  Dense head_fc1_, head_fc2_;  // M4
  Dense head_proj_;            // M1-M3
};

PyramidEmbeddings to_pyramid(const Model::PyramidOutput& out, int batch_index, int embed_dim);

}  // namespace gridseek::net
