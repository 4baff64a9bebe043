#include <gtest/gtest.h>

#include <cmath>

#include "gridseek/ndgrad.hpp"
#include "op_cases.hpp"
#include "testing.hpp"

namespace gridseek {
namespace {

using ndgrad::Precision;
using ndgrad::PrecisionScope;
using ndgrad::Tape;
using ndgrad::Tensor;
using testing::gradcheck;
using testing::random_tensor;
using testing::op_cases;
using testing::project;
namespace ops = ndgrad::ops;

constexpr int kSeeds = 20;
constexpr double kOpTolerance = 1e-4;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor::from({2, 3}, {1, 2, 3}), Error);
  EXPECT_EQ(Tensor::zeros({2, 3}).numel(), 6u);
}

TEST(Conv2d, IdentityKernel) {
  PrecisionScope fp64(Precision::kFloat64);
  Tape tape;
  const auto x = Tensor::from({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto y = ops::conv2d(tape, x, Tensor::from({1, 1, 1, 1}, {1}), Tensor::from({1}, {0}), 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, SummationCase) {
  Tape tape;
  const auto y = ops::conv2d(tape, Tensor::full({1, 1, 2, 2}, 1.0), Tensor::full({1, 1, 2, 2}, 1.0),
                             Tensor::from({1}, {0}), 1, 0);
  EXPECT_EQ(y.shape(), (ndgrad::Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y.item(), 4.0);
}

TEST(Conv2d, OutputExtentFormula) {
  Tape tape;
  const auto y = ops::conv2d(tape, Tensor::zeros({2, 3, 9, 7}), Tensor::zeros({5, 3, 3, 3}), Tensor::zeros({5}), 2, 1);
  EXPECT_EQ(y.shape(), (ndgrad::Shape{2, 5, (9 + 2 - 3) / 2 + 1, (7 + 2 - 3) / 2 + 1}));
}

TEST(Conv2d, ShapeErrorsNameTheDimension) {
  Tape tape;
  try {
    ops::conv2d(tape, Tensor::zeros({1, 3, 8, 8}), Tensor::zeros({4, 2, 3, 3}), Tensor::zeros({4}), 1, 1);
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ops::conv2d(tape, Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 5, 5}), Tensor::zeros({1}), 1, 0),
               Error);
}

TEST(Ops, ReluValues) {
  Tape tape;
  const auto y = ops::relu(tape, Tensor::from({3}, {-1, 0, 2}));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{0, 0, 2}));
}

TEST(Ops, UpsampleConstant) {
  Tape tape;
  const auto y = ops::upsample_nearest2x(tape, Tensor::from({1, 1, 1, 1}, {7}));
  EXPECT_EQ(y.shape(), (ndgrad::Shape{1, 1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 7.0);
}

TEST(Ops, L2NormalizeThreeFourFive) {
  PrecisionScope fp64(Precision::kFloat64);
  Tape tape;
  const auto y = ops::l2_normalize(tape, Tensor::from({1, 2}, {3, 4}));
  EXPECT_NEAR(y[0], 0.6, 1e-15);
  EXPECT_NEAR(y[1], 0.8, 1e-15);
}

TEST(Ops, L2NormalizeIdempotentOnUnitRows) {
  Tape tape;
  const auto u = testing::random_unit(16, 3);
  const auto y = ops::l2_normalize(tape, Tensor::from({1, 16}, u));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(y[i], u[i], 1e-7);
}

TEST(Ops, L2NormalizeRejectsZeroRow) {
  Tape tape;
  try {
    ops::l2_normalize(tape, Tensor::zeros({2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateEmbedding);
  }
}

TEST(Ops, LogOfNonPositiveIsDomainError) {
  Tape tape;
  try {
    ops::log(tape, Tensor::from({2}, {1.0, 0.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDomain);
  }
}

TEST(Ops, NllMatchesLogSumExp) {
  PrecisionScope fp64(Precision::kFloat64);
  Tape tape;
  const std::vector<double> z{1000.0, 999.0, 998.5};  // would overflow without max subtraction
  const auto y = ops::nll_from_logits(tape, Tensor::from({3}, z), 1);
  const double expected = std::log(std::exp(1.0) + 1.0 + std::exp(-0.5)) - 0.0;
  EXPECT_NEAR(y.item(), expected, 1e-12);
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  auto x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  ndgrad::backward(tape, ops::sum(tape, x));
  for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, Quadratic) {
  Tape tape;
  auto x = Tensor::from({2}, {1, 2}, true);
  ndgrad::backward(tape, ops::sum(tape, ops::mul(tape, x, x)));
  EXPECT_EQ(x.grad()[0], 2.0);
  EXPECT_EQ(x.grad()[1], 4.0);
}

TEST(Backward, ErrorsOnReuseAndNonScalar) {
  Tape tape;
  auto x = Tensor::from({2}, {1, 2}, true);
  const auto y = ops::scalar_mul(tape, x, 3.0);
  try {
    ndgrad::backward(tape, y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
  }
  const auto s = ops::sum(tape, y);
  ndgrad::backward(tape, s);
  EXPECT_TRUE(tape.consumed());
  EXPECT_THROW(ndgrad::backward(tape, s), Error);
}

TEST(Backward, UnreachableTensorsKeepNoGradient) {
  Tape tape;
  auto x = Tensor::from({2}, {1, 2}, true);
  auto unused = Tensor::from({2}, {3, 4}, true);
  const auto other = ops::exp(tape, unused);
  (void)other;
  ndgrad::backward(tape, ops::sum(tape, x));
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, InferenceTapeRecordsNothing) {
  Tape tape(Tape::Mode::kInference);
  auto x = Tensor::from({2}, {1, 2}, true);
  const auto y = ops::sum(tape, ops::exp(tape, x));
  EXPECT_FALSE(y.requires_grad());
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Precision, Float32RoundsOutputs) {
  Tape tape;
  {
    PrecisionScope fp32(Precision::kFloat32);
    const auto y = ops::scalar_mul(tape, Tensor::scalar(1.0), 0.1);
    EXPECT_EQ(y.item(), static_cast<double>(0.1f));
  }
  PrecisionScope fp64(Precision::kFloat64);
  EXPECT_EQ(ops::scalar_mul(tape, Tensor::scalar(1.0), 0.1).item(), 0.1);
}

TEST(Determinism, SameInputsSameBits) {
  auto run = [] {
    Tape tape;
    const auto x = random_tensor({2, 3, 8, 8}, 5, -1, 1, false);
    const auto w = random_tensor({4, 3, 3, 3}, 6, -1, 1, false);
    return ops::conv2d(tape, x, w, Tensor::zeros({4}), 1, 1);
  };
  const auto a = run(), b = run();
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

// ---------------------------------------------------------------------------
// Finite-difference checks, fp64, >= 20 seeds per op.

class OpGradcheck : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpGradcheck, MatchesFiniteDifferences) {
  const auto c = op_cases()[GetParam()];
  for (int seed = 0; seed < kSeeds; ++seed) {
    const double err = c.run(1000 * GetParam() + static_cast<std::uint64_t>(seed));
    EXPECT_LT(err, kOpTolerance) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, OpGradcheck, ::testing::Range<std::size_t>(0, op_cases().size()),
                         [](const auto& info) { return std::string(op_cases()[info.param].name); });

TEST(Backward, Linearity) {
  PrecisionScope fp64(Precision::kFloat64);
  for (int seed = 0; seed < kSeeds; ++seed) {
    auto x = random_tensor({4, 6}, 77 + seed);
    auto w = random_tensor({3, 6}, 99 + seed);
    auto loss1 = [&](Tape& t) { return ops::sum(t, ops::exp(t, ops::linear(t, x, w))); };
    auto loss2 = [&](Tape& t) { return project(t, ops::l2_normalize(t, x), seed); };
    auto grads = [&](const std::function<Tensor(Tape&)>& f) {
      x.zero_grad();
      Tape t;
      ndgrad::backward(t, f(t));
      return std::vector<double>(x.grad().begin(), x.grad().end());
    };
    const double a = 0.7, b = -1.3;
    const auto g1 = grads(loss1), g2 = grads(loss2);
    const auto g = grads([&](Tape& t) {
      return ops::add(t, ops::scalar_mul(t, loss1(t), a), ops::scalar_mul(t, loss2(t), b));
    });
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], a * g1[i] + b * g2[i], 1e-10);
  }
}

TEST(Init, HeUniformBoundsAndDeterminism) {
  auto t1 = Tensor::zeros({64, 27});
  auto t2 = Tensor::zeros({64, 27});
  ndgrad::he_uniform(t1, 27, 5);
  ndgrad::he_uniform(t2, 27, 5);
  const double bound = std::sqrt(6.0 / 27);
  double maxabs = 0;
  for (std::size_t i = 0; i < t1.numel(); ++i) {
    EXPECT_EQ(t1[i], t2[i]);
    maxabs = std::max(maxabs, std::abs(t1[i]));
  }
  EXPECT_LE(maxabs, bound);
  EXPECT_GT(maxabs, 0.9 * bound);
}

TEST(Parameters, NonFiniteIsAHardError) {
  std::vector<ndgrad::Parameter> params{{"w", Tensor::from({2}, {1.0, std::nan(""), }, true)}};
  try {
    ndgrad::require_finite(params);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFinite);
  }
}

}  // namespace
}  // namespace gridseek
