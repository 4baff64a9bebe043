#pragma once

// Dense tensors with tape-based reverse-mode differentiation.
//
// Storage is always double; in Float32 mode every op rounds its output to
// the nearest float so training runs with single-precision values while
// gradient checks can switch the whole process to Float64.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridseek/error.hpp"

namespace gridseek::ndgrad {

enum class Precision { kFloat32, kFloat64 };

Precision precision() noexcept;
void set_precision(Precision p) noexcept;

// Restores the previous precision on destruction.
class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

// Rounds to the active precision.
double quantize(double v) noexcept;

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad();

  // Only for leaf tensors that are not on a live tape (initialization,
  // optimizer updates, checkpoint loading).
  std::span<double> mutable_data() { return impl_->data; }

  // Copy with independent storage and no tape history.
  Tensor detach() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;
  std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of differentiable ops. Recording order is a topological
// order, so `backward` replays adjoints in reverse. A tape in inference mode
// records nothing and its outputs never require gradients.
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  bool recording() const noexcept { return mode_ == Mode::kRecord; }
  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return records_.size(); }

  // Creates an op output. It requires grad iff recording and any input does.
  Tensor make_output(Shape shape, std::vector<double> values,
                     std::initializer_list<const Tensor*> inputs);

  using Adjoint = std::function<void()>;
  void record(const Tensor& output, Adjoint adjoint);

 private:
  friend void backward(Tape& tape, const Tensor& loss);

  struct Record {
    std::shared_ptr<TensorImpl> output;
    Adjoint adjoint;
  };

  Mode mode_;
  bool consumed_ = false;
  std::vector<Record> records_;
};

// Populates grad of every requires_grad tensor reachable from `loss`, then
// marks the tape consumed.
void backward(Tape& tape, const Tensor& loss);

// Adds into impl->grad, allocating on first use.
void accumulate_grad(TensorImpl& impl, std::span<const double> g);
std::vector<double>& grad_buffer(TensorImpl& impl);

namespace ops {

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);
Tensor relu(Tape& tape, const Tensor& x);
Tensor maxpool2d(Tape& tape, const Tensor& x, std::size_t kernel, std::size_t stride);
Tensor global_avg_pool(Tape& tape, const Tensor& x);
Tensor upsample_nearest2x(Tape& tape, const Tensor& x);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
// y = x W^T + b; pass an undefined bias for none.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias = {});
Tensor exp(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);
Tensor sum(Tape& tape, const Tensor& x);
Tensor scalar_mul(Tape& tape, const Tensor& x, double s);

inline constexpr double kNormEpsilon = 1e-12;
Tensor l2_normalize(Tape& tape, const Tensor& x);

// [B,C,H,W] -> [B*H*W, C]; row (b*H + y)*W + x holds the channel vector.
Tensor to_rows(Tape& tape, const Tensor& x);
// Rows of a rank-2 tensor by index; repeats allowed.
Tensor select_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
// logsumexp(logits) - logits[target] over a [1,K] or [K] tensor, computed
// with max subtraction.
Tensor nll_from_logits(Tape& tape, const Tensor& logits, std::size_t target);

}  // namespace ops

struct Parameter {
  std::string name;
  Tensor tensor;
};

void require_finite(std::span<const Parameter> params);

// He-style uniform init in [-sqrt(6/fan_in), sqrt(6/fan_in)].
void he_uniform(Tensor& t, std::size_t fan_in, std::uint64_t seed);

// Weight checkpoint: "GSKW", u32 version, u64 count, then per tensor the
// name, shape and little-endian fp32 values.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

std::vector<char> encode_checkpoint(std::span<const Parameter> params);
std::vector<NamedTensor> decode_checkpoint(std::span<const char> bytes);
void save_checkpoint(const std::string& path, std::span<const Parameter> params);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace gridseek::ndgrad
