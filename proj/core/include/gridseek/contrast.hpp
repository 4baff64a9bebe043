#pragma once

// Anchor-based NT-Xent loss.
//
// For a query crop embedding z_i with positive pyramid cell z_j, batch
// embeddings {z_k} (2N rows: the crop and positive of every sample) and
// same-image anchor negatives A:
//
//   AN     = sum_{a in A} exp(sim(z_i, z_a) / tau)
//   l(i,j) = -log( exp(sim(z_i, z_j)/tau) /
//                  (sum_{k != i} exp(sim(z_i, z_k)/tau) + AN) )
//
// The k = j term sits in the denominator, so l(i,j) >= 0.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gridseek/imops.hpp"
#include "gridseek/ndgrad.hpp"
#include "gridseek/net.hpp"

namespace gridseek::contrast {

using ndgrad::Tape;
using ndgrad::Tensor;
using net::Embedding;

struct LossConfig {
  double tau = 0.1;
  int batch_size = 8;
  std::optional<int> anchors_per_sample = 64;

  void validate() const;
};

struct CellRef {
  int level = 0;
  int row = 0;
  int col = 0;
  friend bool operator==(const CellRef&, const CellRef&) = default;
};

struct AnchorSet {
  std::vector<Embedding> embeddings;
  std::vector<CellRef> provenance;

  std::size_t size() const { return embeddings.size(); }
  bool empty() const { return embeddings.empty(); }
};

inline constexpr double kUnitTolerance = 1e-4;

// Dot product of two unit vectors; rejects inputs whose norm is off by more
// than kUnitTolerance.
double cosine_sim(const Embedding& a, const Embedding& b);
double cosine_sim(std::span<const double> a, std::span<const double> b);

double anchor_negative_term(const Embedding& z_i, const AnchorSet& anchors, double tau);

// Differentiable loss over tensor rows. `batch` is [2N, D]; `anchors` is
// [A, D] or undefined for an empty anchor set.
Tensor ant_xent_loss(Tape& tape, const Tensor& batch, std::size_t query_row, std::size_t positive_row,
                     const Tensor& anchors, const LossConfig& cfg);

// Value-level convenience: locates z_i and z_j inside `batch`.
Tensor ant_xent_loss(Tape& tape, const Embedding& z_i, const Embedding& z_j, std::span<const Embedding> batch,
                     const AnchorSet& anchors, const LossConfig& cfg);

// Geometry of the positive/anchor choice on one grid level.
struct CellSelection {
  std::size_t positive = 0;            // row-major cell index
  std::vector<std::size_t> anchors;    // row-major cell indices, ascending
};

// Positive: the cell whose centre is nearest the box centre (ties to the
// lowest row-major index). Anchors: every other cell whose centre lies
// outside the box, uniformly subsampled to `cap` with `seed`.
CellSelection select_cells(int level, int rows, int cols, const imops::Box& box, std::optional<int> cap,
                           std::uint64_t seed);

struct PositiveAndAnchors {
  Embedding positive;
  CellRef positive_cell;
  AnchorSet anchors;
};

PositiveAndAnchors select_positive_and_anchors(const net::PyramidEmbeddings& pyr, const imops::Box& crop, int level,
                                               std::optional<int> cap = 64, std::uint64_t seed = 0);
inline PositiveAndAnchors select_positive_and_anchors(const net::PyramidEmbeddings& pyr, const imops::CropSpec& crop,
                                                      int level, std::optional<int> cap = 64, std::uint64_t seed = 0) {
  return select_positive_and_anchors(pyr, imops::Box::from(crop), level, cap, seed);
}

struct Sample {
  Tensor z_i;      // [1, D]
  Tensor z_j;      // [1, D]
  Tensor anchors;  // [A, D] or undefined
};

// Mean of l(i,j) over samples; the batch negatives for every sample are the
// z_i and z_j rows of all samples. `batch` rows are laid out as
// (z_i of sample s) at 2s and (z_j of sample s) at 2s+1.
Tensor batch_loss(Tape& tape, const Tensor& batch, std::span<const Tensor> anchors, const LossConfig& cfg);
Tensor batch_loss(Tape& tape, std::span<const Sample> samples, const LossConfig& cfg);

}  // namespace gridseek::contrast
