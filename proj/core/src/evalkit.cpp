#include "gridseek/evalkit.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "gridseek/contrast.hpp"
#include "gridseek/index.hpp"
#include "gridseek/parallel.hpp"

namespace gridseek::evalkit {

std::size_t SimilarityGrid::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

SimilarityGrid similarity_grid(const Embedding& query, const EmbeddingGrid& grid) {
  if (static_cast<int>(query.dim()) != grid.dim) throw Error(ErrorKind::kShapeMismatch, "query and grid dimensions differ");
  SimilarityGrid out{grid.rows, grid.cols, {}};
  out.values.reserve(static_cast<std::size_t>(grid.rows * grid.cols));
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) out.values.push_back(contrast::cosine_sim(query.values, grid.cell(r, c)));
  }
  return out;
}

std::string SgaResult::to_json() const {
  nlohmann::ordered_json j;
  j["per_level"] = per_level;
  j["n_samples"] = n_samples;
  return j.dump(2);
}

imops::Box crop_box_in_input(const imops::CropSpec& crop, int image_w, int image_h, int input_size) {
  const double sx = static_cast<double>(input_size) / image_w;
  const double sy = static_cast<double>(input_size) / image_h;
  return {crop.x0 * sx, crop.y0 * sy, crop.w * sx, crop.h * sy};
}

SgaResult sga(const net::Encoder& model, std::span<const EvalSample> samples, int threads) {
  if (samples.empty()) throw Error(ErrorKind::kInvalidArgument, "SGA needs a non-empty evaluation set");
  std::vector<std::array<int, net::kLevels>> correct(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto& s = samples[i];
    const auto z = model.encode_crop(imops::crop(s.image, s.crop));
    const auto pyr = model.encode_image(s.image);
    const auto box = crop_box_in_input(s.crop, s.image.width(), s.image.height(), model.image_size());
    for (std::size_t l = 0; l < net::kLevels; ++l) {
      const auto& g = pyr.grids[l];
      const auto best = similarity_grid(z, g).argmax();
      const int r = static_cast<int>(best) / g.cols, c = static_cast<int>(best) % g.cols;
      correct[i][l] = box.contains(g.center_x(c), g.center_y(r)) ? 1 : 0;
    }
  });
  SgaResult out;
  out.n_samples = static_cast<int>(samples.size());
  for (std::size_t l = 0; l < net::kLevels; ++l) {
    int hits = 0;
    for (const auto& c : correct) hits += c[l];
    out.per_level[l] = static_cast<double>(hits) / static_cast<double>(samples.size());
  }
  return out;
}

SgaBaseline sga_random_baseline(std::span<const EvalSample> samples, int input_size) {
  if (samples.empty()) throw Error(ErrorKind::kInvalidArgument, "baseline needs a non-empty evaluation set");
  SgaBaseline out;
  const double n = static_cast<double>(samples.size());
  for (std::size_t l = 0; l < net::kLevels; ++l) {
    const int stride = net::level_stride(static_cast<int>(l));
    const int cells = input_size / stride;
    double mean = 0.0, var = 0.0;
    for (const auto& s : samples) {
      const auto box = crop_box_in_input(s.crop, s.image.width(), s.image.height(), input_size);
      int inside = 0;
      for (int r = 0; r < cells; ++r) {
        for (int c = 0; c < cells; ++c) inside += box.contains((c + 0.5) * stride, (r + 0.5) * stride) ? 1 : 0;
      }
      const double p = static_cast<double>(inside) / (cells * cells);
      mean += p;
      var += p * (1.0 - p);
    }
    out.mean[l] = mean / n;
    out.sigma[l] = std::sqrt(var) / n;
  }
  return out;
}

double TopKResult::at(int k) const {
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    if (k_values[i] == k) return accuracy[i];
  }
  throw Error(ErrorKind::kInvalidArgument, "k=" + std::to_string(k) + " was not evaluated");
}

std::string TopKResult::to_json() const {
  nlohmann::ordered_json j;
  j["k_values"] = k_values;
  j["accuracy"] = accuracy;
  j["n_queries"] = n_queries;
  return j.dump(2);
}

TopKResult topk_accuracy(const net::Encoder& model, const index::RetrievalIndex& idx,
                         std::span<const EvalSample> queries, std::vector<int> ks, int threads) {
  if (queries.empty()) throw Error(ErrorKind::kInvalidArgument, "top-k evaluation needs at least one query");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.empty() || ks.front() < 1) throw Error(ErrorKind::kInvalidArgument, "k values must be positive");
  for (const auto& q : queries) {
    if (idx.find(q.crop.source_id) == nullptr) {
      throw Error(ErrorKind::kData, "query source '" + q.crop.source_id + "' is not in the index");
    }
  }
  // Rank (0-based) of each query's source; size() when absent from the list.
  std::vector<std::size_t> rank(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    const auto& q = queries[i];
    const auto results = idx.query(model.encode_crop(imops::crop(q.image, q.crop)), idx.size());
    rank[i] = idx.size();
    for (std::size_t r = 0; r < results.size(); ++r) {
      if (results[r].image_id == q.crop.source_id) {
        rank[i] = r;
        break;
      }
    }
  });
  TopKResult out;
  out.n_queries = static_cast<int>(queries.size());
  for (int k : ks) {
    std::size_t hits = 0;
    for (auto r : rank) hits += r < static_cast<std::size_t>(k) ? 1 : 0;
    out.k_values.push_back(k);
    out.accuracy.push_back(static_cast<double>(hits) / static_cast<double>(queries.size()));
  }
  return out;
}

std::string EpochStats::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["avg_positive_sim"] = avg_positive_sim;
  j["avg_negative_sim"] = avg_negative_sim;
  j["avg_loss"] = avg_loss;
  return j.dump();
}

EpochStats track_epoch(int epoch, std::span<const StepMetrics> steps) {
  if (steps.empty()) throw Error(ErrorKind::kInvalidArgument, "epoch " + std::to_string(epoch) + " has no steps");
  EpochStats s;
  s.epoch = epoch;
  for (const auto& m : steps) {
    s.avg_positive_sim += m.avg_positive_sim;
    s.avg_negative_sim += m.avg_negative_sim;
    s.avg_loss += m.loss;
  }
  const double n = static_cast<double>(steps.size());
  s.avg_positive_sim /= n;
  s.avg_negative_sim /= n;
  s.avg_loss /= n;
  return s;
}

}  // namespace gridseek::evalkit
