#pragma once

#include <functional>
#include <span>
#include <vector>

#include "gridseek/contrast.hpp"
#include "gridseek/data.hpp"
#include "gridseek/evalkit.hpp"
#include "gridseek/net.hpp"

namespace gridseek::train {

// Adam with bias-corrected moment estimates.
class Adam {
 public:
  Adam(const data::OptimizerConfig& cfg, double learning_rate, const std::vector<ndgrad::Parameter>& params);

  // Applies one update from the accumulated gradients, then clears them.
  void step(std::vector<ndgrad::Parameter>& params);
  long steps() const { return t_; }

 private:
  data::OptimizerConfig cfg_;
  double lr_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Augmentation settings in force for a given epoch. Identical to cfg.augment
// unless random_jitter is set, in which case hue and saturation/value ranges
// are redrawn from the seed and the epoch.
imops::AugmentConfig epoch_augment(const data::TrainConfig& cfg, int epoch);

// One training example: the crop x_i, the augmented full view x_j and where
// the crop landed inside the view.
struct TrainSample {
  imops::Image crop;  // crop_size x crop_size
  imops::Image view;  // image_size x image_size
  imops::Box box;     // crop rectangle in view pixels
};

TrainSample prepare_sample(const imops::Image& img, const data::TrainConfig& cfg, const imops::AugmentConfig& aug,
                           std::uint64_t sample_index);

// Sum over the five pyramid levels of the batch ANT-Xent loss. Anchors are
// subsampled with `anchor_seed`. When `metrics` is given it receives the
// mean positive and negative similarities (loss is left for the caller).
ndgrad::Tensor pyramid_loss(ndgrad::Tape& tape, const net::Model& model, std::span<const TrainSample> samples,
                            const contrast::LossConfig& loss_cfg, std::uint64_t anchor_seed,
                            evalkit::StepMetrics* metrics = nullptr);

struct TrainResult {
  net::Model model;
  std::vector<evalkit::EpochStats> history;
};

using EpochCallback = std::function<void(const evalkit::EpochStats&)>;

// Trains from scratch. Each image contributes crops_per_image samples per
// epoch; each step minimises pyramid_loss. Throws kNonFinite if the loss or any weight stops being
// finite.
TrainResult train(const data::TrainConfig& cfg, std::span<const imops::Image> images,
                  const EpochCallback& on_epoch = {}, int threads = 1);

}  // namespace gridseek::train
