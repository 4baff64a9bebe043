#include "gridseek/ndgrad.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gridseek/rng.hpp"

namespace gridseek::ndgrad {

namespace {

std::atomic<Precision> g_precision{Precision::kFloat32};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

[[noreturn]] void shape_error(const std::string& op, const std::string& what) {
  throw Error(ErrorKind::kShapeMismatch, op + ": " + what);
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank, const char* name) {
  if (!t.defined()) shape_error(op, std::string(name) + " is undefined");
  if (t.rank() != rank) {
    shape_error(op, std::string(name) + " must have rank " + std::to_string(rank) + ", got " +
                        shape_str(t.shape()));
  }
}

void quantize_all(std::vector<double>& v) {
  if (precision() == Precision::kFloat64) return;
  for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
}

template <typename M>
Eigen::Matrix<typename M::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> product(const M& a, bool ta,
                                                                                          const M& b, bool tb) {
  Eigen::Matrix<typename M::Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r;
  if (ta && tb) r.noalias() = a.transpose() * b.transpose();
  else if (ta) r.noalias() = a.transpose() * b;
  else if (tb) r.noalias() = a * b.transpose();
  else r.noalias() = a * b;
  return r;
}

// op(a) * op(b), computed in single precision unless fp64 is active.
RowMatrix matmul(ConstMatMap a, bool ta, ConstMatMap b, bool tb) {
  if (precision() == Precision::kFloat64) return product(a, ta, b, tb);
  using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const FloatMatrix af = a.cast<float>(), bf = b.cast<float>();
  return product(af, ta, bf, tb).cast<double>();
}

}  // namespace

Precision precision() noexcept { return g_precision.load(std::memory_order_relaxed); }
void set_precision(Precision p) noexcept { g_precision.store(p, std::memory_order_relaxed); }

double quantize(double v) noexcept {
  return precision() == Precision::kFloat64 ? v : static_cast<double>(static_cast<float>(v));
}

std::size_t numel(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape.empty()) throw Error(ErrorKind::kShapeMismatch, "tensor shape must have rank >= 1");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw Error(ErrorKind::kShapeMismatch, "extent " + std::to_string(i) + " of " +
                                                 shape_str(shape) + " is zero");
    }
  }
  if (ndgrad::numel(shape) != values.size()) {
    throw Error(ErrorKind::kShapeMismatch, "shape " + shape_str(shape) + " needs " +
                                               std::to_string(ndgrad::numel(shape)) + " values, got " +
                                               std::to_string(values.size()));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = ndgrad::numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorKind::kShapeMismatch, "item() on tensor " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

std::vector<double>& grad_buffer(TensorImpl& impl) {
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

void accumulate_grad(TensorImpl& impl, std::span<const double> g) {
  auto& buf = grad_buffer(impl);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::make_output(Shape shape, std::vector<double> values,
                         std::initializer_list<const Tensor*> inputs) {
  if (consumed_) throw Error(ErrorKind::kTape, "cannot record onto a consumed tape");
  quantize_all(values);
  bool needs_grad = false;
  if (recording()) {
    for (const Tensor* in : inputs) {
      if (in != nullptr && in->defined() && in->requires_grad()) needs_grad = true;
    }
  }
  return Tensor::from(std::move(shape), std::move(values), needs_grad);
}

void Tape::record(const Tensor& output, Adjoint adjoint) {
  if (!output.requires_grad()) return;
  records_.push_back({output.impl(), std::move(adjoint)});
}

void backward(Tape& tape, const Tensor& loss) {
  if (tape.consumed_) throw Error(ErrorKind::kTape, "tape already consumed by a backward pass");
  if (!loss.defined() || loss.numel() != 1) {
    throw Error(ErrorKind::kShapeMismatch,
                "backward needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  if (tape.records_.empty()) throw Error(ErrorKind::kTape, "backward on an empty tape");
  if (!loss.requires_grad()) throw Error(ErrorKind::kTape, "loss does not depend on any tensor requiring grad");
  tape.consumed_ = true;

  grad_buffer(*loss.impl())[0] += 1.0;
  for (auto it = tape.records_.rbegin(); it != tape.records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // unreachable from loss
    it->adjoint();
  }
  // Free intermediate buffers; parameter grads live on their own impls.
  tape.records_.clear();
}

// ---------------------------------------------------------------------------
// ops

namespace ops {

namespace {

struct ConvGeometry {
  std::size_t batch, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t k() const { return cin * kh * kw; }
  std::size_t p() const { return ho * wo; }
};

template <typename T>
void im2col(const double* x, const ConvGeometry& g, T* col) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* dst = col + ((c * g.kh + ky) * g.kw + kx) * g.p();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill_n(dst + oy * g.wo, g.wo, T{0});
            continue;
          }
          const double* row = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[oy * g.wo + ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T{0} : static_cast<T>(row[ix]);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, const ConvGeometry& g, double* dx) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* src = col + ((c * g.kh + ky) * g.kw + kx) * g.p();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* row = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) row[ix] += static_cast<double>(src[oy * g.wo + ox]);
          }
        }
      }
    }
  }
}

template <typename T>
using MatrixOf = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Convolution as one GEMM per image over im2col columns, in scalar type T.
template <typename T>
void conv_forward(const ConvGeometry& g, const double* x, const double* w, const double* bias, double* y) {
  const MatrixOf<T> wm = ConstMatMap(w, g.cout, g.k()).cast<T>();
  MatrixOf<T> col(g.k(), g.p()), ym(g.cout, g.p());
  for (std::size_t b = 0; b < g.batch; ++b) {
    im2col(x + b * g.cin * g.h * g.w, g, col.data());
    ym.noalias() = wm * col;
    MatMap out(y + b * g.cout * g.p(), g.cout, g.p());
    out = ym.template cast<double>();
    for (std::size_t c = 0; c < g.cout; ++c) out.row(c).array() += bias[c];
  }
}

// Null output pointers skip that gradient.
template <typename T>
void conv_backward(const ConvGeometry& g, const double* x, const double* w, const double* dy_all, double* dx,
                   double* dw, double* db) {
  MatrixOf<T> wm, col, dcol, dw_acc;
  if (dx) {
    wm = ConstMatMap(w, g.cout, g.k()).cast<T>();
    dcol.resize(g.k(), g.p());
  }
  if (dw) {
    col.resize(g.k(), g.p());
    dw_acc = MatrixOf<T>::Zero(g.cout, g.k());
  }
  for (std::size_t b = 0; b < g.batch; ++b) {
    const ConstMatMap dy_map(dy_all + b * g.cout * g.p(), g.cout, g.p());
    const MatrixOf<T> dy = dy_map.cast<T>();
    if (dw) {
      im2col(x + b * g.cin * g.h * g.w, g, col.data());
      dw_acc.noalias() += dy * col.transpose();
    }
    if (db) {
      for (std::size_t c = 0; c < g.cout; ++c) db[c] += dy_map.row(c).sum();
    }
    if (dx) {
      dcol.noalias() = wm.transpose() * dy;
      col2im(dcol.data(), g, dx + b * g.cin * g.h * g.w);
    }
  }
  if (dw) MatMap(dw, g.cout, g.k()) += dw_acc.template cast<double>();
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
  if (!a.defined() || !b.defined()) shape_error(op, "undefined operand");
  if (a.shape() != b.shape()) shape_error(op, "operands " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

template <typename Forward, typename Derivative>
Tensor unary(Tape& tape, const Tensor& x, Forward f, Derivative df) {
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Tensor y = tape.make_output(x.shape(), std::move(out), {&x});
  tape.record(y, [xi = x.impl(), yi = y.impl(), df] {
    if (!xi->requires_grad) return;
    auto& gx = grad_buffer(*xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += yi->grad[i] * df(xi->data[i], yi->data[i]);
  });
  return y;
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  const std::string op = "conv2d";
  require_rank(op, input, 4, "input");
  require_rank(op, weight, 4, "weight");
  require_rank(op, bias, 1, "bias");
  if (stride == 0) throw Error(ErrorKind::kInvalidArgument, "conv2d: stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0),
                 weight.dim(2), weight.dim(3), stride, padding, 0, 0};
  if (weight.dim(1) != g.cin) {
    shape_error(op, "dimension 1 (input channels): input has " + std::to_string(g.cin) +
                        ", weight expects " + std::to_string(weight.dim(1)));
  }
  if (bias.dim(0) != g.cout) {
    shape_error(op, "dimension 0 (output channels): weight has " + std::to_string(g.cout) +
                        ", bias has " + std::to_string(bias.dim(0)));
  }
  if (g.kh > g.h + 2 * padding) shape_error(op, "dimension 2 (kernel height) exceeds padded input height");
  if (g.kw > g.w + 2 * padding) shape_error(op, "dimension 3 (kernel width) exceeds padded input width");
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

  std::vector<double> out(g.batch * g.cout * g.p());
  if (precision() == Precision::kFloat64) {
    conv_forward<double>(g, input.data().data(), weight.data().data(), bias.data().data(), out.data());
  } else {
    conv_forward<float>(g, input.data().data(), weight.data().data(), bias.data().data(), out.data());
  }

  Tensor y = tape.make_output({g.batch, g.cout, g.ho, g.wo}, std::move(out), {&input, &weight, &bias});
  tape.record(y, [g, xi = input.impl(), wi = weight.impl(), bi = bias.impl(), yi = y.impl()] {
    double* dx = xi->requires_grad ? grad_buffer(*xi).data() : nullptr;
    double* dw = wi->requires_grad ? grad_buffer(*wi).data() : nullptr;
    double* db = bi->requires_grad ? grad_buffer(*bi).data() : nullptr;
    if (precision() == Precision::kFloat64) {
      conv_backward<double>(g, xi->data.data(), wi->data.data(), yi->grad.data(), dx, dw, db);
    } else {
      conv_backward<float>(g, xi->data.data(), wi->data.data(), yi->grad.data(), dx, dw, db);
    }
  });
  return y;
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor maxpool2d(Tape& tape, const Tensor& x, std::size_t kernel, std::size_t stride) {
  const std::string op = "maxpool2d";
  require_rank(op, x, 4, "input");
  if (kernel == 0 || stride == 0) throw Error(ErrorKind::kInvalidArgument, "maxpool2d: kernel and stride must be positive");
  const std::size_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernel > h || kernel > w) shape_error(op, "dimension 2/3: kernel larger than input");
  const std::size_t ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
  std::vector<double> out(bc * ho * wo);
  std::vector<std::size_t> argmax(out.size());
  const auto in = x.data();
  for (std::size_t p = 0; p < bc; ++p) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = p * h * w + oy * stride * w + ox * stride;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const std::size_t idx = p * h * w + (oy * stride + ky) * w + ox * stride + kx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (p * ho + oy) * wo + ox;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
  Tensor y = tape.make_output({x.dim(0), x.dim(1), ho, wo}, std::move(out), {&x});
  tape.record(y, [xi = x.impl(), yi = y.impl(), argmax = std::move(argmax)] {
    if (!xi->requires_grad) return;
    auto& gx = grad_buffer(*xi);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += yi->grad[o];
  });
  return y;
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  require_rank("global_avg_pool", x, 4, "input");
  const std::size_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(bc);
  const auto in = x.data();
  for (std::size_t p = 0; p < bc; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += in[p * hw + i];
    out[p] = s / static_cast<double>(hw);
  }
  Tensor y = tape.make_output({x.dim(0), x.dim(1)}, std::move(out), {&x});
  tape.record(y, [xi = x.impl(), yi = y.impl(), bc, hw] {
    if (!xi->requires_grad) return;
    auto& gx = grad_buffer(*xi);
    for (std::size_t p = 0; p < bc; ++p) {
      const double g = yi->grad[p] / static_cast<double>(hw);
      for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g;
    }
  });
  return y;
}

Tensor upsample_nearest2x(Tape& tape, const Tensor& x) {
  require_rank("upsample_nearest2x", x, 4, "input");
  const std::size_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  std::vector<double> out(bc * 4 * h * w);
  const auto in = x.data();
  for (std::size_t p = 0; p < bc; ++p) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) {
        out[(p * 2 * h + y) * 2 * w + xx] = in[(p * h + y / 2) * w + xx / 2];
      }
    }
  }
  Tensor y = tape.make_output({x.dim(0), x.dim(1), 2 * h, 2 * w}, std::move(out), {&x});
  tape.record(y, [xi = x.impl(), yi = y.impl(), bc, h, w] {
    if (!xi->requires_grad) return;
    auto& gx = grad_buffer(*xi);
    for (std::size_t p = 0; p < bc; ++p) {
      for (std::size_t yy = 0; yy < 2 * h; ++yy) {
        for (std::size_t xx = 0; xx < 2 * w; ++xx) {
          gx[(p * h + yy / 2) * w + xx / 2] += yi->grad[(p * 2 * h + yy) * 2 * w + xx];
        }
      }
    }
  });
  return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor y = tape.make_output(a.shape(), std::move(out), {&a, &b});
  tape.record(y, [ai = a.impl(), bi = b.impl(), yi = y.impl()] {
    if (ai->requires_grad) accumulate_grad(*ai, yi->grad);
    if (bi->requires_grad) accumulate_grad(*bi, yi->grad);
  });
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor y = tape.make_output(a.shape(), std::move(out), {&a, &b});
  tape.record(y, [ai = a.impl(), bi = b.impl(), yi = y.impl()] {
    // Read both inputs before writing either grad; a and b may alias.
    const std::size_t n = yi->grad.size();
    std::vector<double> ga(n), gb(n);
    for (std::size_t i = 0; i < n; ++i) {
      ga[i] = yi->grad[i] * bi->data[i];
      gb[i] = yi->grad[i] * ai->data[i];
    }
    if (ai->requires_grad) accumulate_grad(*ai, ga);
    if (bi->requires_grad) accumulate_grad(*bi, gb);
  });
  return y;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const std::string op = "linear";
  require_rank(op, x, 2, "input");
  require_rank(op, weight, 2, "weight");
  const std::size_t batch = x.dim(0), din = x.dim(1), dout = weight.dim(0);
  if (weight.dim(1) != din) {
    shape_error(op, "dimension 1 (input features): input has " + std::to_string(din) + ", weight expects " +
                        std::to_string(weight.dim(1)));
  }
  if (bias.defined()) {
    require_rank(op, bias, 1, "bias");
    if (bias.dim(0) != dout) {
      shape_error(op, "dimension 0 (output features): weight has " + std::to_string(dout) + ", bias has " +
                          std::to_string(bias.dim(0)));
    }
  }
  std::vector<double> out(batch * dout);
  MatMap ym(out.data(), batch, dout);
  ym = matmul(ConstMatMap(x.data().data(), batch, din), false, ConstMatMap(weight.data().data(), dout, din), true);
  if (bias.defined()) {
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < dout; ++c) ym(r, c) += bias[c];
    }
  }
  Tensor y = tape.make_output({batch, dout}, std::move(out), {&x, &weight, &bias});
  std::shared_ptr<TensorImpl> bi = bias.defined() ? bias.impl() : nullptr;
  tape.record(y, [xi = x.impl(), wi = weight.impl(), bi, yi = y.impl(), batch, din, dout] {
    ConstMatMap dy(yi->grad.data(), batch, dout);
    // Compute both products before accumulating; x and W may alias.
    RowMatrix gx, gw;
    if (xi->requires_grad) gx = matmul(dy, false, ConstMatMap(wi->data.data(), dout, din), false);
    if (wi->requires_grad) gw = matmul(dy, true, ConstMatMap(xi->data.data(), batch, din), false);
    if (xi->requires_grad) MatMap(grad_buffer(*xi).data(), batch, din) += gx;
    if (wi->requires_grad) MatMap(grad_buffer(*wi).data(), dout, din) += gw;
    if (bi && bi->requires_grad) {
      auto& gb = grad_buffer(*bi);
      for (std::size_t c = 0; c < dout; ++c) gb[c] += dy.col(c).sum();
    }
  });
  return y;
}

Tensor exp(Tape& tape, const Tensor& x) {
  return unary(
      tape, x, [](double v) { return std::exp(v); }, [](double, double out) { return out; });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw Error(ErrorKind::kDomain, "log of non-positive value " + std::to_string(v));
  }
  return unary(
      tape, x, [](double v) { return std::log(v); }, [](double in, double) { return 1.0 / in; });
}

Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = tape.make_output({1}, {s}, {&x});
  tape.record(y, [xi = x.impl(), yi = y.impl()] {
    if (!xi->requires_grad) return;
    auto& gx = grad_buffer(*xi);
    for (auto& g : gx) g += yi->grad[0];
  });
  return y;
}

Tensor scalar_mul(Tape& tape, const Tensor& x, double s) {
  return unary(
      tape, x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Tensor l2_normalize(Tape& tape, const Tensor& x) {
  require_rank("l2_normalize", x, 2, "input");
  const std::size_t rows = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.numel());
  std::vector<double> norms(rows);
  const auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) ss += in[r * d + c] * in[r * d + c];
    const double n = std::sqrt(ss);
    if (!(n >= kNormEpsilon)) {
      throw Error(ErrorKind::kDegenerateEmbedding, "row " + std::to_string(r) + " has norm " + std::to_string(n));
    }
    norms[r] = n;
    for (std::size_t c = 0; c < d; ++c) out[r * d + c] = in[r * d + c] / n;
  }
  Tensor y = tape.make_output(x.shape(), std::move(out), {&x});
  tape.record(y, [xi = x.impl(), yi = y.impl(), norms = std::move(norms), rows, d] {
    if (!xi->requires_grad) return;
    auto& gx = grad_buffer(*xi);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = yi->data.data() + r * d;
      const double* gr = yi->grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += yr[c] * gr[c];
      for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += (gr[c] - yr[c] * dot) / norms[r];
    }
  });
  return y;
}

Tensor to_rows(Tape& tape, const Tensor& x) {
  require_rank("to_rows", x, 4, "input");
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(x.numel());
  const auto in = x.data();
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < hw; ++p) out[(n * hw + p) * c + ch] = in[(n * c + ch) * hw + p];
    }
  }
  Tensor y = tape.make_output({b * hw, c}, std::move(out), {&x});
  tape.record(y, [xi = x.impl(), yi = y.impl(), b, c, hw] {
    if (!xi->requires_grad) return;
    auto& gx = grad_buffer(*xi);
    for (std::size_t n = 0; n < b; ++n) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < hw; ++p) gx[(n * c + ch) * hw + p] += yi->grad[(n * hw + p) * c + ch];
      }
    }
  });
  return y;
}

Tensor select_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows) {
  require_rank("select_rows", x, 2, "input");
  if (rows.empty()) shape_error("select_rows", "empty row selection");
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) {
      throw Error(ErrorKind::kOutOfBounds, "select_rows: row " + std::to_string(rows[i]) + " of " + std::to_string(n));
    }
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  Tensor y = tape.make_output({rows.size(), d}, std::move(out), {&x});
  tape.record(y, [xi = x.impl(), yi = y.impl(), idx = std::vector<std::size_t>(rows.begin(), rows.end()), d] {
    if (!xi->requires_grad) return;
    auto& gx = grad_buffer(*xi);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) gx[idx[i] * d + c] += yi->grad[i * d + c];
    }
  });
  return y;
}

Tensor concat_rows(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) shape_error("concat_rows", "no inputs");
  const std::size_t d = parts.front().dim(1);
  std::size_t total = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    require_rank("concat_rows", p, 2, "part");
    if (p.dim(1) != d) shape_error("concat_rows", "dimension 1 differs between parts");
    total += p.dim(0);
    needs_grad = needs_grad || p.requires_grad();
  }
  std::vector<double> out;
  out.reserve(total * d);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  // make_output takes a fixed list; fold the grad requirement through a
  // representative input.
  const Tensor* rep = &parts.front();
  for (const auto& p : parts) {
    if (p.requires_grad()) rep = &p;
  }
  Tensor y = tape.make_output({total, d}, std::move(out), {rep});
  std::vector<std::shared_ptr<TensorImpl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  tape.record(y, [impls = std::move(impls), yi = y.impl()] {
    std::size_t offset = 0;
    for (const auto& pi : impls) {
      const std::size_t n = pi->data.size();
      if (pi->requires_grad) accumulate_grad(*pi, std::span<const double>(yi->grad).subspan(offset, n));
      offset += n;
    }
  });
  return y;
}

Tensor nll_from_logits(Tape& tape, const Tensor& logits, std::size_t target) {
  if (!logits.defined() || logits.rank() > 2 || (logits.rank() == 2 && logits.dim(0) != 1)) {
    shape_error("nll_from_logits", "logits must be [K] or [1,K]");
  }
  const auto z = logits.data();
  if (target >= z.size()) throw Error(ErrorKind::kOutOfBounds, "nll_from_logits: target index out of range");
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  Tensor y = tape.make_output({1}, {lse - z[target]}, {&logits});
  tape.record(y, [li = logits.impl(), yi = y.impl(), m, s, target] {
    if (!li->requires_grad) return;
    auto& g = grad_buffer(*li);
    const double gy = yi->grad[0];
    for (std::size_t k = 0; k < g.size(); ++k) {
      g[k] += gy * (std::exp(li->data[k] - m) / s - (k == target ? 1.0 : 0.0));
    }
  });
  return y;
}

}  // namespace ops

// ---------------------------------------------------------------------------

void require_finite(std::span<const Parameter> params) {
  for (const auto& p : params) {
    for (double v : p.tensor.data()) {
      if (!std::isfinite(v)) throw Error(ErrorKind::kNonFinite, "parameter " + p.name + " holds " + std::to_string(v));
    }
  }
}

void he_uniform(Tensor& t, std::size_t fan_in, std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  CounterRng rng(seed);
  for (auto& v : t.mutable_data()) v = quantize(rng.uniform(-bound, bound));
}

}  // namespace gridseek::ndgrad
