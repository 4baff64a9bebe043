#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gridseek/contrast.hpp"
#include "gridseek/imops.hpp"
#include "gridseek/net.hpp"

namespace gridseek::data {

enum class Split { kTrain, kEval, kAll };

struct DatasetItem {
  std::string image_id;  // path relative to the root, without extension
  std::string path;

  friend bool operator==(const DatasetItem&, const DatasetItem&) = default;
};

struct Dataset {
  std::string root;
  Split split = Split::kAll;
  std::vector<DatasetItem> items;  // lexicographic by path

  std::size_t size() const { return items.size(); }
  std::vector<imops::Image> load_images() const;
};

// Every .png/.jpg/.jpeg below root (recursively), sorted by path.
Dataset scan_dataset(const std::string& root);

// Ranks items by a seeded hash and sends the first round(fraction * n) to
// train (clamped so both splits are non-empty when 0 < fraction < 1). Each
// split keeps lexicographic order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& all, double train_fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> load_dataset(const std::string& root, double train_fraction, std::uint64_t seed);

enum class ShapeKind { kCircle, kSquare, kTriangle };
std::string_view to_string(ShapeKind k);

struct ShapeInfo {
  ShapeKind kind;
  double cx, cy;   // centre in pixels
  double size;     // circle: diameter; square: side; triangle: base (= height)
  std::array<float, 3> rgb;

  double area() const;
  bool contains(double x, double y) const;
};

struct SyntheticImage {
  std::string image_id;
  imops::Image image;
  std::vector<ShapeInfo> shapes;
};

// Pure function of (n, size, seed).
std::vector<SyntheticImage> render_synthetic(int n, int size, std::uint64_t seed);
// Writes img_XXXXX.png files and manifest.json to out_dir.
Dataset gen_synthetic(int n, int size, std::uint64_t seed, const std::string& out_dir);
std::string manifest_json(const std::vector<SyntheticImage>& images);

// ---------------------------------------------------------------------------

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct TrainConfig {
  net::ModelVariant variant = net::ModelVariant::kM4;
  int epochs = 100;
  int batch_size = 8;
  double tau = 0.1;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 0x5eed0001;
  int image_size = 64;
  int crop_size = 32;
  int embedding_dim = 32;
  int repr_dim = 128;
  int pyramid_channels = 32;
  int stage_depth = 1;
  int anchors_per_sample = 64;
  int crops_per_image = 1;
  // M1: draw new jitter ranges at the start of every epoch.
  bool random_jitter = false;
  imops::AugmentConfig augment;
  OptimizerConfig optimizer;

  void validate() const;
  net::ModelConfig model_config() const;
  contrast::LossConfig loss_config() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

TrainConfig preset(net::ModelVariant variant);

// key=value lines, '#' comments. `variant` picks the preset first; every
// other key then overrides it. Errors name the offending line.
TrainConfig parse_config_text(const std::string& text);
TrainConfig parse_config(const std::string& path);
std::string serialize_config(const TrainConfig& cfg);

}  // namespace gridseek::data
