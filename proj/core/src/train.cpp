#include "gridseek/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridseek/contrast.hpp"
#include "gridseek/parallel.hpp"
#include "gridseek/rng.hpp"

namespace gridseek::train {

using ndgrad::Tape;
using ndgrad::Tensor;
namespace ops = ndgrad::ops;

Adam::Adam(const data::OptimizerConfig& cfg, double learning_rate, const std::vector<ndgrad::Parameter>& params)
    : cfg_(cfg), lr_(learning_rate) {
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(std::vector<ndgrad::Parameter>& params) {
  if (params.size() != m_.size()) throw Error(ErrorKind::kInvalidArgument, "optimizer/parameter count mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      w[k] = ndgrad::quantize(w[k] - lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps));
    }
    t.zero_grad();
  }
}

imops::AugmentConfig epoch_augment(const data::TrainConfig& cfg, int epoch) {
  imops::AugmentConfig a = cfg.augment;
  a.seed = cfg.seed;
  a.output_size = cfg.image_size;
  if (!cfg.random_jitter) return a;
  CounterRng rng(hash_key({cfg.seed, 0x6a177e5ull, static_cast<std::uint64_t>(epoch)}));
  a.hue_delta = rng.uniform(0.0, 0.5);
  auto draw_range = [&rng] {
    const double lo = rng.uniform(0.2, 1.0);
    const double hi = rng.uniform(1.0, 1.8);
    return imops::Range{lo, hi};
  };
  a.sat_range = draw_range();
  a.val_range = draw_range();
  return a;
}

TrainSample prepare_sample(const imops::Image& img, const data::TrainConfig& cfg, const imops::AugmentConfig& aug,
                           std::uint64_t sample_index) {
  const auto spec = imops::sample_crop(img, hash_key({cfg.seed, 0xc409ull, sample_index}));
  const auto src_box = imops::Box::from(spec);
  auto result = imops::augment(img, aug, sample_index, std::make_pair(src_box.cx(), src_box.cy()));
  const auto geom = imops::ViewGeometry::from_log(result.log, img.width(), img.height());
  TrainSample s;
  s.crop = imops::resize(imops::crop(img, spec), cfg.crop_size, cfg.crop_size, imops::Interpolation::kBilinear);
  s.view = std::move(result.image);
  s.box = geom.map_box(src_box);
  return s;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::span<const double> row(const Tensor& t, std::size_t r) {
  const std::size_t d = t.dim(1);
  return t.data().subspan(r * d, d);
}

}  // namespace

Tensor pyramid_loss(Tape& tape, const net::Model& model, std::span<const TrainSample> samples,
                    const contrast::LossConfig& loss_cfg, std::uint64_t anchor_seed, evalkit::StepMetrics* metrics) {
  if (samples.empty()) throw Error(ErrorKind::kInvalidArgument, "pyramid_loss needs at least one sample");
  const std::size_t b = samples.size();
  std::vector<imops::Image> crops, views;
  for (const auto& p : samples) {
    crops.push_back(p.crop);
    views.push_back(p.view);
  }
  const auto& mc = model.config();
  const auto z_crop = model.forward_crops(tape, net::images_to_tensor(crops, mc.crop_size)).embedding;
  const auto pyr = model.forward_images(tape, net::images_to_tensor(views, mc.image_size));

  Tensor total;
  double pos_sum = 0.0, neg_sum = 0.0;
  std::size_t pos_n = 0, neg_n = 0;
  for (int level = 0; level < net::kLevels; ++level) {
    const auto& cells = pyr.cells[static_cast<std::size_t>(level)];
    const auto rows = pyr.rows[static_cast<std::size_t>(level)];
    const auto cols = pyr.cols[static_cast<std::size_t>(level)];
    const auto per = static_cast<std::size_t>(rows * cols);

    std::vector<std::size_t> positives(b);
    std::vector<Tensor> anchors(b);
    std::vector<Tensor> batch_rows;
    for (std::size_t s = 0; s < b; ++s) {
      const auto sel = contrast::select_cells(level, rows, cols, samples[s].box, loss_cfg.anchors_per_sample,
                                              hash_key({anchor_seed, s}));
      positives[s] = s * per + sel.positive;
      const std::size_t zi[] = {s};
      const std::size_t zj[] = {positives[s]};
      batch_rows.push_back(ops::select_rows(tape, z_crop, zi));
      batch_rows.push_back(ops::select_rows(tape, cells, zj));
      if (sel.anchors.empty()) continue;
      std::vector<std::size_t> idx(sel.anchors.size());
      for (std::size_t a = 0; a < idx.size(); ++a) idx[a] = s * per + sel.anchors[a];
      anchors[s] = ops::select_rows(tape, cells, idx);
      for (std::size_t a : idx) neg_sum += dot(row(z_crop, s), row(cells, a));
      neg_n += idx.size();
    }
    for (std::size_t s = 0; s < b; ++s) {
      pos_sum += dot(row(z_crop, s), row(cells, positives[s]));
      ++pos_n;
      for (std::size_t o = 0; o < b; ++o) {
        if (o == s) continue;
        neg_sum += dot(row(z_crop, s), row(z_crop, o)) + dot(row(z_crop, s), row(cells, positives[o]));
        neg_n += 2;
      }
    }
    const auto level_loss = contrast::batch_loss(tape, ops::concat_rows(tape, batch_rows), anchors, loss_cfg);
    total = total.defined() ? ops::add(tape, total, level_loss) : level_loss;
  }
  if (metrics) {
    metrics->avg_positive_sim = pos_sum / static_cast<double>(pos_n);
    metrics->avg_negative_sim = neg_n ? neg_sum / static_cast<double>(neg_n) : 0.0;
  }
  return total;
}

TrainResult train(const data::TrainConfig& cfg, std::span<const imops::Image> images, const EpochCallback& on_epoch,
                  int threads) {
  cfg.validate();
  if (images.empty()) throw Error(ErrorKind::kData, "training needs at least one image");
  const auto loss_cfg = cfg.loss_config();
  TrainResult out{net::Model(cfg.model_config()), {}};
  auto& model = out.model;
  Adam adam(cfg.optimizer, cfg.learning_rate, model.parameters());

  const std::size_t per_image = static_cast<std::size_t>(cfg.crops_per_image);
  const std::size_t n_samples = images.size() * per_image;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto aug = epoch_augment(cfg, epoch);

    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    {
      CounterRng rng(hash_key({cfg.seed, 0x5e7ull, static_cast<std::uint64_t>(epoch)}));
      for (std::size_t i = n_samples; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<long long>(i - 1)));
        std::swap(order[i - 1], order[j]);
      }
    }

    std::vector<evalkit::StepMetrics> steps;
    for (std::size_t start = 0, step = 0; start < n_samples; start += batch, ++step) {
      const std::size_t b = std::min(batch, n_samples - start);
      std::vector<TrainSample> prepared(b);
      parallel_for(b, threads, [&](std::size_t s) {
        const std::size_t sample = order[start + s];
        const std::uint64_t sample_index = static_cast<std::uint64_t>(epoch - 1) * n_samples + sample;
        prepared[s] = prepare_sample(images[sample / per_image], cfg, aug, sample_index);
      });

      Tape tape;
      evalkit::StepMetrics metrics;
      const auto loss = pyramid_loss(tape, model, prepared, loss_cfg,
                                     hash_key({cfg.seed, static_cast<std::uint64_t>(epoch), step}), &metrics);
      metrics.loss = loss.item();
      if (!std::isfinite(metrics.loss)) {
        throw Error(ErrorKind::kNonFinite, "loss became non-finite at epoch " + std::to_string(epoch));
      }
      ndgrad::backward(tape, loss);
      adam.step(model.parameters());
      ndgrad::require_finite(model.parameters());
      steps.push_back(metrics);
    }
    out.history.push_back(evalkit::track_epoch(epoch, steps));
    if (on_epoch) on_epoch(out.history.back());
  }
  return out;
}

}  // namespace gridseek::train
