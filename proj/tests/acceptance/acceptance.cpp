// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Pass criterion numbers as arguments to run
// a subset, e.g. `acceptance 1 2 10`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gridseek/contrast.hpp"
#include "gridseek/data.hpp"
#include "gridseek/evalkit.hpp"
#include "gridseek/index.hpp"
#include "gridseek/rng.hpp"
#include "gridseek/train.hpp"
#include "op_cases.hpp"
#include "testing.hpp"

namespace gridseek {
namespace {

using ndgrad::Tape;
using ndgrad::Tensor;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared fixtures

constexpr int kLearnImages = 64;
constexpr int kLearnEpochs = 30;
constexpr std::uint64_t kDataSeed = 1;

std::vector<std::vector<double>> random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < n; ++i) rows.push_back(testing::random_unit(d, hash_key({seed, i})));
  return rows;
}

Tensor to_tensor(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from({rows.size(), rows[0].size()}, flat);
}

double loss_of(const std::vector<std::vector<double>>& batch, std::size_t i, std::size_t j,
               const std::vector<std::vector<double>>& anchors, double tau) {
  contrast::LossConfig cfg;
  cfg.tau = tau;
  Tape tape(Tape::Mode::kInference);
  return contrast::ant_xent_loss(tape, to_tensor(batch), i, j, to_tensor(anchors), cfg).item();
}

std::vector<imops::Image> learn_images() {
  std::vector<imops::Image> out;
  for (auto& s : data::render_synthetic(kLearnImages, 64, kDataSeed)) out.push_back(std::move(s.image));
  return out;
}

std::string image_id(std::size_t i) { return "img_" + std::to_string(i); }

// `per_image` crops per image, keyed by the evaluation seed.
std::vector<evalkit::EvalSample> eval_crops(const std::vector<imops::Image>& images, std::uint64_t eval_seed,
                                            int per_image) {
  std::vector<evalkit::EvalSample> out;
  for (int k = 0; k < per_image; ++k) {
    for (std::size_t i = 0; i < images.size(); ++i) {
      const auto n = static_cast<std::uint64_t>(k) * images.size() + i;
      auto crop = imops::sample_crop(images[i], hash_key({eval_seed, n}));
      crop.source_id = image_id(i);
      out.push_back({images[i], crop});
    }
  }
  return out;
}

data::TrainConfig learnability_config(net::ModelVariant variant, std::uint64_t seed) {
  auto cfg = data::preset(variant);
  cfg.epochs = kLearnEpochs;
  cfg.crops_per_image = 40;
  cfg.seed = seed;
  cfg.augment.seed = seed;
  return cfg;
}

struct TrainedRun {
  train::TrainResult result;
  double seconds = 0.0;
  evalkit::SgaResult sga;
  evalkit::SgaBaseline baseline;
};

TrainedRun train_and_score(const data::TrainConfig& cfg, const std::vector<imops::Image>& images) {
  TrainedRun run{train::TrainResult{net::Model(cfg.model_config()), {}}, 0.0, {}, {}};
  const auto t0 = Clock::now();
  run.result = train::train(cfg, images, [](const evalkit::EpochStats& s) {
    std::fprintf(stderr, "    %s\n", s.to_json().c_str());
  }, 1);
  run.seconds = seconds_since(t0);
  const auto samples = eval_crops(images, cfg.eval_seed, 4);
  run.sga = evalkit::sga(run.result.model, samples);
  run.baseline = evalkit::sga_random_baseline(samples, cfg.image_size);
  return run;
}

std::optional<TrainedRun>& m4_run() {
  static std::optional<TrainedRun> run;
  return run;
}

const TrainedRun& trained_m4() {
  if (!m4_run()) {
    std::fprintf(stderr, "  training M4 for the learnability protocol\n");
    m4_run() = train_and_score(learnability_config(net::ModelVariant::kM4, 0), learn_images());
  }
  return *m4_run();
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness

// The summed pyramid loss is O(10), so central differences with step 1e-6
// carry about 5e-9 of rounding noise; gradients below 1e-5 cannot be resolved
// to 1e-3 relative.
constexpr double kEndToEndFloor = 1e-5;

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double op_worst = 0.0;
  std::string op_worst_name;
  const auto cases = testing::op_cases();
  for (std::size_t c = 0; c < cases.size(); ++c) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const double e = cases[c].run(1000 * c + seed);
      if (!(e <= op_worst)) {
        op_worst = e;
        op_worst_name = cases[c].name;
      }
    }
  }

  // End to end: both encoders, the pyramid and the summed loss.
  ndgrad::PrecisionScope fp64(ndgrad::Precision::kFloat64);
  auto cfg = data::parse_config_text(
      "batch_size=2\nembedding_dim=8\nrepr_dim=16\npyramid_channels=16\nstage_depth=0\nanchors_per_sample=6\n");
  const auto imgs = data::render_synthetic(4, 64, 7);
  double e2e_worst = 0.0;
  std::size_t probed = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    const auto aug = train::epoch_augment(cfg, 1);
    std::vector<train::TrainSample> samples;
    for (std::uint64_t i = 0; i < 2; ++i) {
      samples.push_back(train::prepare_sample(imgs[(seed + i) % 4].image, cfg, aug, seed * 2 + i));
    }
    const net::Model model(cfg.model_config());
    std::vector<Tensor> leaves;
    for (const auto& p : model.parameters()) leaves.push_back(p.tensor);
    const auto res = testing::gradcheck(
        [&](Tape& tape) { return train::pyramid_loss(tape, model, samples, cfg.loss_config(), seed); }, leaves, 1e-6,
        2, seed, kEndToEndFloor);
    e2e_worst = std::max(e2e_worst, res.max_rel_error);
    probed += res.checked;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = op_worst < 1e-4 && e2e_worst < 1e-3 && secs < 120.0;
  o.detail = fmt("%zu ops x 20 seeds max rel err %.2e (%s, limit 1e-4); model+loss x 20 seeds max rel err %.2e over "
                 "%zu coords (limit 1e-3, step 1e-6, denominator floor %.0e); %.1f s (limit 120 s)",
                 cases.size(), op_worst, op_worst_name.c_str(), e2e_worst, probed, kEndToEndFloor, secs);
  return o;
}

// ---------------------------------------------------------------------------
// 2. Loss oracle equivalence

Outcome loss_oracle() {
  ndgrad::PrecisionScope fp64(ndgrad::Precision::kFloat64);
  const auto t0 = Clock::now();
  double worst_loss = 0.0, worst_an = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    CounterRng rng(hash_key({0x0a11, t}));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 8));
    const auto d = static_cast<std::size_t>(rng.uniform_int(2, 32));
    const auto batch = random_rows(2 * n, d, hash_key({1, t}));
    const auto anchors = random_rows(static_cast<std::size_t>(rng.uniform_int(0, 16)), d, hash_key({2, t}));
    const double tau = rng.uniform(0.05, 1.0);
    const auto i = 2 * static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
    worst_loss = std::max(worst_loss, std::abs(loss_of(batch, i, i + 1, anchors, tau) -
                                               testing::scalar_ant_xent(batch, i, i + 1, anchors, tau)));
    contrast::AnchorSet set;
    for (const auto& a : anchors) {
      set.embeddings.push_back(net::Embedding{a});
      set.provenance.push_back({});
    }
    worst_an = std::max(worst_an, std::abs(contrast::anchor_negative_term(net::Embedding{batch[i]}, set, tau) -
                                           testing::scalar_anchor_negative(batch[i], anchors, tau)));
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst_loss <= 1e-10 && worst_an <= 1e-10 && secs < 10.0;
  o.detail = fmt("100 instances: max |loss - oracle| %.2e, max |AN - oracle| %.2e (limit 1e-10); %.2f s", worst_loss,
                 worst_an, secs);
  return o;
}

// ---------------------------------------------------------------------------
// 3. Loss invariants

Outcome loss_invariants() {
  ndgrad::PrecisionScope fp64(ndgrad::Precision::kFloat64);
  int negative = 0, anchor_mono = 0, positive_mono = 0, permutation = 0, zero_case = 0;
  for (std::uint64_t t = 0; t < 1000; ++t) {
    CounterRng rng(hash_key({0x1417, t}));
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const auto d = static_cast<std::size_t>(rng.uniform_int(2, 16));
    auto batch = random_rows(2 * n, d, hash_key({3, t}));
    auto anchors = random_rows(static_cast<std::size_t>(rng.uniform_int(1, 10)), d, hash_key({4, t}));
    const double tau = rng.uniform(0.05, 1.0);
    const double base = loss_of(batch, 0, 1, anchors, tau);

    if (!(base >= 0.0)) ++negative;

    auto more = anchors;
    more.push_back(testing::random_unit(d, hash_key({5, t})));
    if (!(loss_of(batch, 0, 1, more, tau) >= base)) ++anchor_mono;

    // Move z_j towards z_i; every other similarity stays fixed.
    auto closer = batch;
    const double alpha = rng.uniform(0.05, 2.0);
    double norm = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      closer[1][k] += alpha * closer[0][k];
      norm += closer[1][k] * closer[1][k];
    }
    for (auto& v : closer[1]) v /= std::sqrt(norm);
    if (testing::dot(closer[0], closer[1]) > testing::dot(batch[0], batch[1]) &&
        !(loss_of(closer, 0, 1, anchors, tau) < base)) {
      ++positive_mono;
    }

    auto shuffled = anchors;
    for (std::size_t k = shuffled.size(); k > 1; --k) {
      std::swap(shuffled[k - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k) - 1))]);
    }
    if (std::abs(loss_of(batch, 0, 1, shuffled, tau) - base) > 1e-12) ++permutation;

    const std::vector<std::vector<double>> pair{batch[0], batch[1]};
    if (loss_of(pair, 0, 1, {}, tau) != 0.0) ++zero_case;
  }
  Outcome o;
  o.pass = negative + anchor_mono + positive_mono + permutation + zero_case == 0;
  o.detail = fmt("violations in 1000 trials each: non-negativity %d, anchor monotonicity %d, positive monotonicity %d, "
                 "AN permutation %d, N=1 exact zero %d",
                 negative, anchor_mono, positive_mono, permutation, zero_case);
  return o;
}

// ---------------------------------------------------------------------------
// 4. Augmentation statistics

Outcome augmentation_statistics() {
  imops::AugmentConfig cfg;
  cfg.output_size = 16;
  cfg.seed = 4242;
  imops::Image img(24, 24);
  CounterRng rng(1);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  std::map<std::string, int> counts;
  const int n = 10000;
  bool deterministic = true;
  for (int i = 0; i < n; ++i) {
    const auto a = imops::augment(img, cfg, static_cast<std::uint64_t>(i));
    for (const auto& t : a.log.transforms) ++counts[t.name];
    if (i % 50 == 0) {
      const auto b = imops::augment(img, cfg, static_cast<std::uint64_t>(i));
      deterministic = deterministic && a.image == b.image && a.log == b.log;
    }
  }
  auto f = [&](const char* name) { return counts[name] / static_cast<double>(n); };
  const double crop = f("crop_zoom"), fh = f("flip_h"), fv = f("flip_v"), jpeg = f("jpeg");
  Outcome o;
  o.pass = std::abs(crop - 0.65) <= 0.03 && std::abs(fh - 0.5) <= 0.03 && std::abs(fv - 0.5) <= 0.03 &&
           std::abs(jpeg - 0.7) <= 0.03 && deterministic;
  o.detail = fmt("10000 draws: crop/zoom %.4f (0.65), flip_h %.4f (0.5), flip_v %.4f (0.5), jpeg %.4f (0.7), "
                 "tolerance 0.03; repeated (seed, index) bit-identical: %s",
                 crop, fh, fv, jpeg, deterministic ? "yes" : "no");
  return o;
}

// ---------------------------------------------------------------------------
// 5. SGA sanity

Outcome sga_sanity() {
  const auto t0 = Clock::now();
  std::vector<imops::Image> images;
  for (auto& s : data::render_synthetic(256, 64, 55)) images.push_back(std::move(s.image));
  const auto samples = eval_crops(images, 0x5a5a, 1);
  const net::Model untrained(data::parse_config_text("seed=11").model_config());
  const auto res = evalkit::sga(untrained, samples);
  const auto base = evalkit::sga_random_baseline(samples, 64);
  bool within = true;
  std::string levels;
  for (std::size_t l = 0; l < net::kLevels; ++l) {
    const double z = base.sigma[l] > 0 ? (res.per_level[l] - base.mean[l]) / base.sigma[l] : 0.0;
    within = within && std::abs(res.per_level[l] - base.mean[l]) <= 3.0 * base.sigma[l] + 1e-12;
    levels += fmt(" L%zu %.3f vs %.3f (z %+.2f)", l, res.per_level[l], base.mean[l], z);
  }

  // Rigged oracle: position-coded images and an encoder that reads the
  // crop position back.
  const auto pos = testing::position_image(64, 64);
  std::vector<evalkit::EvalSample> rigged;
  for (std::uint64_t i = 0; i < 256; ++i) rigged.push_back({pos, imops::sample_crop(pos, hash_key({0x716, i}))});
  const double oracle = evalkit::sga(testing::PositionOracle(0), rigged).per_level[0];
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = within && oracle == 1.0 && secs < 60.0;
  o.detail = fmt("untrained model on 256 samples within 3 sigma of random baseline:%s; rigged oracle %.3f; %.1f s",
                 levels.c_str(), oracle, secs);
  return o;
}

// ---------------------------------------------------------------------------
// 6. Learnability

Outcome learnability() {
  const auto& run = trained_m4();
  const auto& h = run.result.history;
  const auto& last = h.back();
  const double ratio = run.sga.per_level[0] / run.baseline.mean[0];
  const double gap = last.avg_positive_sim - last.avg_negative_sim;
  Outcome o;
  o.pass = static_cast<int>(h.size()) <= 30 && run.seconds <= 600.0 && ratio >= 5.0 && gap >= 0.2 &&
           last.avg_loss < h.front().avg_loss;
  o.detail = fmt("M4, %d images, %zu epochs, %.0f s single-threaded (limit 600 s); (a) Layer-0 SGA %.3f = %.2fx "
                 "random %.3f (need 5x); (b) final-epoch pos %.3f - neg %.3f = %.3f (need 0.2); (c) loss %.3f -> %.3f",
                 kLearnImages, h.size(), run.seconds, run.sga.per_level[0], ratio, run.baseline.mean[0],
                 last.avg_positive_sim, last.avg_negative_sim, gap, h.front().avg_loss, last.avg_loss);
  return o;
}

// ---------------------------------------------------------------------------
// 7. Retrieval

Outcome retrieval() {
  const auto& run = trained_m4();
  const auto images = learn_images();
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < images.size(); ++i) ids.push_back(image_id(i));
  const auto idx = index::build_index(run.result.model, ids, images);
  const auto queries = eval_crops(images, data::TrainConfig{}.eval_seed, 1);
  const auto res = evalkit::topk_accuracy(run.result.model, idx, queries, {1, 5, 10});
  const double t1 = res.at(1), t5 = res.at(5), t10 = res.at(10);
  Outcome o;
  o.pass = t1 >= 0.3 && t10 >= 0.7 && t1 <= t5 && t5 <= t10;
  o.detail = fmt("%zu images indexed, %d queries: top-1 %.3f (need 0.3), top-5 %.3f, top-10 %.3f (need 0.7); "
                 "random 0.016 / 0.156",
                 idx.size(), res.n_queries, t1, t5, t10);
  return o;
}

// ---------------------------------------------------------------------------
// 8. Index fidelity

std::vector<index::RankedResult> brute_force(const index::RetrievalIndex& idx, const net::Embedding& z) {
  std::vector<index::RankedResult> all;
  for (const auto& e : idx.entries()) {
    index::RankedResult best{e.image_id, -std::numeric_limits<double>::infinity(), {}};
    for (std::size_t c = 0; c < e.cells.size(); ++c) {
      const auto v = e.vector(c);
      double s = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k) s += z.values[k] * static_cast<double>(v[k]);
      if (s > best.score) best = {e.image_id, s, e.cells[c]};
    }
    all.push_back(best);
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.image_id < b.image_id;
  });
  return all;
}

Outcome index_fidelity() {
  const net::Model model(data::parse_config_text("seed=21").model_config());
  auto images = learn_images();
  images.resize(24);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < images.size(); ++i) ids.push_back(image_id(i));
  // Duplicates under later ids force exact score ties.
  for (std::size_t i = 0; i < 4; ++i) {
    images.push_back(images[i]);
    ids.push_back("zdup_" + std::to_string(i));
  }
  const auto idx = index::build_index(model, ids, images);
  testing::TempDir dir("acceptance");
  idx.save(dir.file("a.gski"));
  const auto loaded = index::RetrievalIndex::load(dir.file("a.gski"));

  int mismatches = 0, roundtrip = 0, ties = 0;
  for (std::uint64_t q = 0; q < 100; ++q) {
    net::Embedding z;
    if (q % 2 == 0) {
      z = net::Embedding{testing::random_unit(static_cast<std::size_t>(idx.dim()), hash_key({0x1dc, q}))};
    } else {
      const auto& img = images[q % images.size()];
      z = model.encode_crop(imops::crop(img, imops::sample_crop(img, hash_key({0x1dd, q}))));
    }
    const auto got = idx.query(z, idx.size());
    const auto want = brute_force(idx, z);
    for (std::size_t r = 0; r < want.size(); ++r) {
      if (got[r].image_id != want[r].image_id || got[r].score != want[r].score || !(got[r].best_cell == want[r].best_cell)) {
        ++mismatches;
        break;
      }
    }
    for (std::size_t r = 1; r < want.size(); ++r) ties += want[r].score == want[r - 1].score ? 1 : 0;
    if (loaded.query(z, idx.size()) != got) ++roundtrip;
  }
  const bool bytes_same = loaded.serialize() == idx.serialize();
  Outcome o;
  o.pass = mismatches == 0 && roundtrip == 0 && bytes_same && ties > 0;
  o.detail = fmt("100 queries over %zu images: %d ranking mismatches vs scalar scan (%d tied pairs exercised); "
                 "save/load: %d ranking differences, bytes identical: %s",
                 idx.size(), mismatches, ties, roundtrip, bytes_same ? "yes" : "no");
  return o;
}

// ---------------------------------------------------------------------------
// 9. Variant differentiation

Outcome variant_differentiation() {
  const auto images = learn_images();
  double m1 = 0.0, m2 = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::fprintf(stderr, "  training M1 seed %llu\n", static_cast<unsigned long long>(seed));
    const auto a = train_and_score(learnability_config(net::ModelVariant::kM1, seed), images);
    std::fprintf(stderr, "  training M2 seed %llu\n", static_cast<unsigned long long>(seed));
    const auto b = train_and_score(learnability_config(net::ModelVariant::kM2, seed), images);
    m1 += a.sga.per_level[0] / 3.0;
    m2 += b.sga.per_level[0] / 3.0;
    per_seed += fmt(" [seed %llu: M1 %.3f, M2 %.3f]", static_cast<unsigned long long>(seed), a.sga.per_level[0],
                    b.sga.per_level[0]);
  }
  Outcome o;
  o.pass = m1 < m2;
  o.detail = fmt("mean Layer-0 SGA over 3 seeds: M1 %.3f vs M2 %.3f%s", m1, m2, per_seed.c_str());
  return o;
}

// ---------------------------------------------------------------------------
// 10. Report format

Outcome report_format() {
  bool ok = true;
  std::string detail;
  for (std::size_t k : {2, 3, 5, 10, 17}) {
    std::vector<index::RankedResult> results;
    for (std::size_t r = 0; r < k; ++r) results.push_back({"r" + std::to_string(r), 1.0 - 0.01 * r, {0, 0, 0}});
    const imops::Image thumb(8, 8, 0.5f);
    const auto html = index::render_report(thumb, results, [&](const std::string&) { return thumb; });
    std::regex border("border-color:#([0-9A-F]{2})([0-9A-F]{2})([0-9A-F]{2})");
    std::vector<std::array<int, 3>> colours;
    for (auto it = std::sregex_iterator(html.begin(), html.end(), border); it != std::sregex_iterator(); ++it) {
      colours.push_back({std::stoi((*it)[1], nullptr, 16), std::stoi((*it)[2], nullptr, 16),
                         std::stoi((*it)[3], nullptr, 16)});
    }
    ok = ok && colours.size() == k;
    if (colours.size() != k) continue;
    ok = ok && colours.front() == std::array<int, 3>{255, 0, 0} && colours.back() == std::array<int, 3>{0, 0, 255};
    for (std::size_t r = 0; r < k; ++r) {
      const double t = static_cast<double>(r) / static_cast<double>(k - 1);
      const std::array<double, 3> want{255.0 * (1 - t), 0.0, 255.0 * t};
      for (std::size_t c = 0; c < 3; ++c) ok = ok && std::abs(colours[r][c] - want[c]) <= 0.5;
    }
  }
  detail = "k in {2,3,5,10,17}: rank 1 #FF0000, rank k #0000FF, intermediates channelwise linear within rounding";
  return {ok, detail};
}

// ---------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace gridseek

int main(int argc, char** argv) {
  using namespace gridseek;
  const std::vector<Criterion> all{
      {1, "gradient correctness", gradient_correctness},
      {2, "loss oracle equivalence", loss_oracle},
      {3, "loss invariants", loss_invariants},
      {4, "augmentation statistics", augmentation_statistics},
      {5, "SGA sanity", sga_sanity},
      {6, "learnability", learnability},
      {7, "retrieval", retrieval},
      {8, "index fidelity", index_fidelity},
      {9, "variant differentiation", variant_differentiation},
      {10, "report format", report_format},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
