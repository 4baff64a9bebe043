#include "gridseek/contrast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gridseek/rng.hpp"

namespace gridseek::contrast {

namespace ops = ndgrad::ops;

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw Error(ErrorKind::kInvalidArgument, "tau must be positive");
  if (batch_size < 1) throw Error(ErrorKind::kInvalidArgument, "batch_size must be at least 1");
  if (anchors_per_sample && *anchors_per_sample < 0) {
    throw Error(ErrorKind::kInvalidArgument, "anchors_per_sample must be non-negative");
  }
}

namespace {

void require_unit(std::span<const double> v, const char* which) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  if (std::abs(std::sqrt(ss) - 1.0) > kUnitTolerance) {
    throw Error(ErrorKind::kInvalidArgument, std::string(which) + " is not unit-norm (norm " +
                                                 std::to_string(std::sqrt(ss)) + ")");
  }
}

}  // namespace

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::kShapeMismatch, "cosine_sim of different dimensions");
  require_unit(a, "first operand");
  require_unit(b, "second operand");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::clamp(dot, -1.0, 1.0);
}

double cosine_sim(const Embedding& a, const Embedding& b) { return cosine_sim(a.values, b.values); }

double anchor_negative_term(const Embedding& z_i, const AnchorSet& anchors, double tau) {
  if (!(tau > 0.0)) throw Error(ErrorKind::kInvalidArgument, "tau must be positive");
  double total = 0.0;
  for (const auto& a : anchors.embeddings) total += std::exp(cosine_sim(z_i, a) / tau);
  return total;
}

Tensor ant_xent_loss(Tape& tape, const Tensor& batch, std::size_t query_row, std::size_t positive_row,
                     const Tensor& anchors, const LossConfig& cfg) {
  cfg.validate();
  if (batch.rank() != 2) throw Error(ErrorKind::kShapeMismatch, "batch must be [2N, D]");
  const std::size_t rows = batch.dim(0);
  if (query_row >= rows) throw Error(ErrorKind::kInvalidArgument, "z_i is missing from the batch");
  if (positive_row >= rows || positive_row == query_row) {
    throw Error(ErrorKind::kInvalidArgument, "z_j is missing from the batch");
  }

  // Candidates: every batch row except the query, in ascending order, then
  // the anchors. The positive's slot among them is the target.
  std::vector<std::size_t> others;
  std::size_t target = 0;
  for (std::size_t k = 0; k < rows; ++k) {
    if (k == query_row) continue;
    if (k == positive_row) target = others.size();
    others.push_back(k);
  }
  const std::size_t q[] = {query_row};
  Tensor query = ops::select_rows(tape, batch, q);
  Tensor candidates = ops::select_rows(tape, batch, others);
  if (anchors.defined()) {
    if (anchors.rank() != 2 || anchors.dim(1) != batch.dim(1)) {
      throw Error(ErrorKind::kShapeMismatch, "anchors must be [A, " + std::to_string(batch.dim(1)) + "]");
    }
    const Tensor parts[] = {candidates, anchors};
    candidates = ops::concat_rows(tape, parts);
  }
  Tensor logits = ops::scalar_mul(tape, ops::linear(tape, query, candidates), 1.0 / cfg.tau);
  return ops::nll_from_logits(tape, logits, target);
}

Tensor ant_xent_loss(Tape& tape, const Embedding& z_i, const Embedding& z_j, std::span<const Embedding> batch,
                     const AnchorSet& anchors, const LossConfig& cfg) {
  if (batch.empty()) throw Error(ErrorKind::kInvalidArgument, "empty batch");
  const std::size_t d = z_i.dim();
  auto locate = [&](const Embedding& e, std::size_t skip) {
    for (std::size_t k = 0; k < batch.size(); ++k) {
      if (k != skip && batch[k] == e) return k;
    }
    return batch.size();
  };
  const std::size_t qi = locate(z_i, batch.size());
  if (qi == batch.size()) throw Error(ErrorKind::kInvalidArgument, "z_i is missing from the batch");
  const std::size_t pj = locate(z_j, qi);
  if (pj == batch.size()) throw Error(ErrorKind::kInvalidArgument, "z_j is missing from the batch");

  std::vector<double> rows;
  for (const auto& e : batch) {
    if (e.dim() != d) throw Error(ErrorKind::kShapeMismatch, "batch embeddings differ in dimension");
    rows.insert(rows.end(), e.values.begin(), e.values.end());
  }
  Tensor batch_t = Tensor::from({batch.size(), d}, std::move(rows));
  Tensor anchor_t;
  if (!anchors.empty()) {
    std::vector<double> a;
    for (const auto& e : anchors.embeddings) a.insert(a.end(), e.values.begin(), e.values.end());
    anchor_t = Tensor::from({anchors.size(), d}, std::move(a));
  }
  return ant_xent_loss(tape, batch_t, qi, pj, anchor_t, cfg);
}

CellSelection select_cells(int level, int rows, int cols, const imops::Box& box, std::optional<int> cap,
                           std::uint64_t seed) {
  if (level < 0 || level >= net::kLevels) throw Error(ErrorKind::kInvalidArgument, "level must be in [0,4]");
  if (rows < 1 || cols < 1) throw Error(ErrorKind::kInvalidArgument, "empty grid");
  const double stride = net::level_stride(level);
  const double cx = box.cx(), cy = box.cy();

  CellSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double dx = (c + 0.5) * stride - cx, dy = (r + 0.5) * stride - cy;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best) {
        best = d2;
        sel.positive = static_cast<std::size_t>(r * cols + c);
      }
    }
  }
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const auto idx = static_cast<std::size_t>(r * cols + c);
      if (idx == sel.positive || box.contains((c + 0.5) * stride, (r + 0.5) * stride)) continue;
      sel.anchors.push_back(idx);
    }
  }
  if (cap && sel.anchors.size() > static_cast<std::size_t>(*cap)) {
    // Partial Fisher-Yates, then restore ascending order.
    CounterRng rng(hash_key({seed, static_cast<std::uint64_t>(level)}));
    const auto m = static_cast<std::size_t>(*cap);
    for (std::size_t i = 0; i < m; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                              static_cast<std::int64_t>(sel.anchors.size()) - 1));
      std::swap(sel.anchors[i], sel.anchors[j]);
    }
    sel.anchors.resize(m);
    std::sort(sel.anchors.begin(), sel.anchors.end());
  }
  return sel;
}

PositiveAndAnchors select_positive_and_anchors(const net::PyramidEmbeddings& pyr, const imops::Box& crop, int level,
                                               std::optional<int> cap, std::uint64_t seed) {
  if (level < 0 || level >= net::kLevels) throw Error(ErrorKind::kInvalidArgument, "level must be in [0,4]");
  const auto& g = pyr.grids[static_cast<std::size_t>(level)];
  const auto sel = select_cells(level, g.rows, g.cols, crop, cap, seed);
  auto ref = [&](std::size_t idx) {
    return CellRef{level, static_cast<int>(idx) / g.cols, static_cast<int>(idx) % g.cols};
  };
  PositiveAndAnchors out;
  out.positive_cell = ref(sel.positive);
  out.positive = g.embedding(out.positive_cell.row, out.positive_cell.col);
  for (auto idx : sel.anchors) {
    const auto cr = ref(idx);
    out.anchors.embeddings.push_back(g.embedding(cr.row, cr.col));
    out.anchors.provenance.push_back(cr);
  }
  return out;
}

Tensor batch_loss(Tape& tape, const Tensor& batch, std::span<const Tensor> anchors, const LossConfig& cfg) {
  if (anchors.empty()) throw Error(ErrorKind::kInvalidArgument, "batch_loss needs at least one sample");
  if (batch.rank() != 2 || batch.dim(0) != 2 * anchors.size()) {
    throw Error(ErrorKind::kShapeMismatch, "batch must hold two rows per sample");
  }
  // Fixed summation order by sample index.
  Tensor total = ant_xent_loss(tape, batch, 0, 1, anchors[0], cfg);
  for (std::size_t s = 1; s < anchors.size(); ++s) {
    total = ops::add(tape, total, ant_xent_loss(tape, batch, 2 * s, 2 * s + 1, anchors[s], cfg));
  }
  return ops::scalar_mul(tape, total, 1.0 / static_cast<double>(anchors.size()));
}

Tensor batch_loss(Tape& tape, std::span<const Sample> samples, const LossConfig& cfg) {
  if (samples.empty()) throw Error(ErrorKind::kInvalidArgument, "batch_loss needs at least one sample");
  std::vector<Tensor> rows;
  std::vector<Tensor> anchors;
  for (const auto& s : samples) {
    rows.push_back(s.z_i);
    rows.push_back(s.z_j);
    anchors.push_back(s.anchors);
  }
  return batch_loss(tape, ops::concat_rows(tape, rows), anchors, cfg);
}

}  // namespace gridseek::contrast
