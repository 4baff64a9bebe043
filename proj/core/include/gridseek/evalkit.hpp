#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "gridseek/imops.hpp"
#include "gridseek/net.hpp"

namespace gridseek::index {
class RetrievalIndex;
}

namespace gridseek::evalkit {

using net::Embedding;
using net::EmbeddingGrid;

struct EvalSample {
  imops::Image image;
  imops::CropSpec crop;  // in image pixels; source_id names the image
};

struct SimilarityGrid {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;  // row-major

  double at(int r, int c) const { return values[static_cast<std::size_t>(r * cols + c)]; }
  // Lowest row-major index among the maxima.
  std::size_t argmax() const;
};

SimilarityGrid similarity_grid(const Embedding& query, const EmbeddingGrid& grid);

struct SgaResult {
  std::array<double, net::kLevels> per_level{};
  int n_samples = 0;

  std::string to_json() const;
};

// The crop box in model-input pixels for an image of the given size.
imops::Box crop_box_in_input(const imops::CropSpec& crop, int image_w, int image_h, int input_size);

// A prediction is correct when the argmax cell's centre lies inside the crop.
SgaResult sga(const net::Encoder& model, std::span<const EvalSample> samples, int threads = 1);

// Per-level chance level of SGA for a model whose argmax is uniform over
// cells: mean fraction of cell centres inside each crop, and the standard
// deviation of the resulting accuracy estimate.
struct SgaBaseline {
  std::array<double, net::kLevels> mean{};
  std::array<double, net::kLevels> sigma{};
};
SgaBaseline sga_random_baseline(std::span<const EvalSample> samples, int input_size);

struct TopKResult {
  std::vector<int> k_values;
  std::vector<double> accuracy;
  int n_queries = 0;

  double at(int k) const;
  std::string to_json() const;
};

// A query is correct at k when its source image is among the top k ranked
// images (the source itself stays a candidate).
TopKResult topk_accuracy(const net::Encoder& model, const index::RetrievalIndex& index,
                         std::span<const EvalSample> queries, std::vector<int> ks = {1, 5, 10}, int threads = 1);

struct StepMetrics {
  double avg_positive_sim = 0.0;
  double avg_negative_sim = 0.0;
  double loss = 0.0;
};

struct EpochStats {
  int epoch = 0;
  double avg_positive_sim = 0.0;
  double avg_negative_sim = 0.0;
  double avg_loss = 0.0;

  std::string to_json() const;  // one line, no trailing newline
};

EpochStats track_epoch(int epoch, std::span<const StepMetrics> steps);

}  // namespace gridseek::evalkit
