// SPDX-License-Identifier: Apache-2.0
#include "spikacom/ops.hpp"

#include "spikacom/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace spikacom::dg {
namespace {

Tape& tape_of(const Var& a) {
  if (!a.tape) throw ArgumentError("unbound Var");
  return *a.tape;
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape != b.tape || !a.tape) throw ArgumentError("operands recorded on different tapes");
  return *a.tape;
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return;
  std::string where;
  if (a.rank() != b.rank()) {
    where = "rank " + std::to_string(a.rank()) + " vs " + std::to_string(b.rank());
  } else {
    for (std::size_t i = 0; i < a.rank(); ++i) {
      if (a.shape()[i] != b.shape()[i]) {
        where = "axis " + std::to_string(i);
        break;
      }
    }
  }
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
                   " at " + where);
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
  if (a.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(a.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <class F, class DF>
Var elementwise(Var a, F f, DF df) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return t.record(std::move(y), {a}, [a, df](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a)) {
      const Tensor& x = a.value();
      for (std::size_t i = 0; i < x.size(); ++i) (*ga)[i] += g[i] * df(x[i]);
    }
  });
}

void add_into(Tensor* dst, const Tensor& src, double c = 1.0) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += c * src[i];
}

// im2col for one sample: rows (ci, ky, kx), columns (oy, ox).
void im2col(const double* x, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            const ConvOpts& o, std::size_t ho, std::size_t wo, RowMatrix& cols) {
  cols.setZero(static_cast<Eigen::Index>(cin * kh * kw), static_cast<Eigen::Index>(ho * wo));
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const auto row = static_cast<Eigen::Index>((c * kh + ky) * kw + kx);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * o.stride + ky) - static_cast<std::ptrdiff_t>(o.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * o.stride + kx) - static_cast<std::ptrdiff_t>(o.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            cols(row, static_cast<Eigen::Index>(oy * wo + ox)) = x[(c * h + iy) * w + ix];
          }
        }
      }
}

void col2im(const RowMatrix& cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            const ConvOpts& o, std::size_t ho, std::size_t wo, double* dx) {
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const auto row = static_cast<Eigen::Index>((c * kh + ky) * kw + kx);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * o.stride + ky) - static_cast<std::ptrdiff_t>(o.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * o.stride + kx) - static_cast<std::ptrdiff_t>(o.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            dx[(c * h + iy) * w + ix] += cols(row, static_cast<Eigen::Index>(oy * wo + ox));
          }
        }
      }
}

}  // namespace

double atan_surrogate_grad(double x, double alpha) {
  const double z = std::numbers::pi * alpha * x / 2.0;
  return alpha / (2.0 * (1.0 + z * z));
}

double threshold_value(double x, const SurrogateSpec& spec) {
  if (spec.relaxed) return 0.5 + std::atan(std::numbers::pi * spec.alpha * x / 2.0) / std::numbers::pi;
  return x >= 0.0 ? 1.0 : 0.0;
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same("add", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  return t.record(std::move(y), {a, b}, [a, b](const Tensor& g, GradSink& sink) {
    add_into(sink.slot(a), g);
    add_into(sink.slot(b), g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same("sub", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  return t.record(std::move(y), {a, b}, [a, b](const Tensor& g, GradSink& sink) {
    add_into(sink.slot(a), g);
    add_into(sink.slot(b), g, -1.0);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same("mul", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  return t.record(std::move(y), {a, b}, [a, b](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b.value()[i];
    if (Tensor* gb = sink.slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a.value()[i];
  });
}

Var div(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same("div", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] /= b.value()[i];
  return t.record(std::move(y), {a, b}, [a, b](const Tensor& g, GradSink& sink) {
    const Tensor& bv = b.value();
    if (Tensor* ga = sink.slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / bv[i];
    if (Tensor* gb = sink.slot(b))
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i] * a.value()[i] / (bv[i] * bv[i]);
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  for (double& v : y.values()) v *= c;
  return t.record(std::move(y), {a}, [a, c](const Tensor& g, GradSink& sink) { add_into(sink.slot(a), g, c); });
}

Var add_scalar(Var a, double c) {
  Tape& t = tape_of(a);
  Tensor y = a.value();
  for (double& v : y.values()) v += c;
  return t.record(std::move(y), {a}, [a](const Tensor& g, GradSink& sink) { add_into(sink.slot(a), g); });
}

Var mul_scalar(Var a, Var s) {
  Tape& t = tape_of(a, s);
  if (s.value().size() != 1) throw ShapeError("mul_scalar: scale operand has shape " + shape_str(s.shape()));
  const double c = s.value()[0];
  Tensor y = a.value();
  for (double& v : y.values()) v *= c;
  return t.record(std::move(y), {a, s}, [a, s](const Tensor& g, GradSink& sink) {
    add_into(sink.slot(a), g, s.value()[0]);
    if (Tensor* gs = sink.slot(s)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a.value()[i];
      (*gs)[0] += acc;
    }
  });
}

Var exp(Var a) {
  return elementwise(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  return elementwise(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var sqrt(Var a) {
  return elementwise(a, [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); });
}

Var square(Var a) {
  return elementwise(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var sigmoid(Var a) {
  auto s = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return elementwise(a, s, [s](double x) {
    const double v = s(x);
    return v * (1.0 - v);
  });
}

Var tanh(Var a) {
  return elementwise(a, [](double x) { return std::tanh(x); },
                     [](double x) {
                       const double v = std::tanh(x);
                       return 1.0 - v * v;
                     });
}

Var relu(Var a) {
  return elementwise(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x) { return x > 0 ? 1.0 : 0.0; });
}

Var unary(Var a, const std::function<double(double)>& f, const std::function<double(double)>& df) {
  return elementwise(a, f, df);
}

Var heaviside(Var a, SurrogateSpec spec) {
  if (!(spec.alpha > 0)) throw ArgumentError("surrogate alpha must be positive");
  const double alpha = spec.alpha;
  return elementwise(a, [spec](double x) { return threshold_value(x, spec); },
                     [alpha](double x) { return atan_surrogate_grad(x, alpha); });
}

Var detach(Var a) { return tape_of(a).constant(a.value()); }

Var broadcast_add(Var x, Var v, std::size_t axis) {
  Tape& t = tape_of(x, v);
  const Tensor& xv = x.value();
  if (axis >= xv.rank() || v.value().size() != xv.dim(axis)) {
    throw ShapeError("broadcast_add: operand of shape " + shape_str(v.shape()) + " does not match axis " +
                     std::to_string(axis) + " of " + shape_str(xv.shape()));
  }
  const AxisSplit s = split_at(xv.shape(), axis);
  Tensor y = xv;
  const Tensor& vv = v.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t k = 0; k < s.inner; ++k) y[(o * s.n + j) * s.inner + k] += vv[j];
  return t.record(std::move(y), {x, v}, [x, v, s](const Tensor& g, GradSink& sink) {
    add_into(sink.slot(x), g);
    if (Tensor* gv = sink.slot(v))
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.n; ++j)
          for (std::size_t k = 0; k < s.inner; ++k) (*gv)[j] += g[(o * s.n + j) * s.inner + k];
  });
}

Var broadcast_mul(Var x, Var v, std::size_t axis) {
  Tape& t = tape_of(x, v);
  const Tensor& xv = x.value();
  if (axis >= xv.rank() || v.value().size() != xv.dim(axis)) {
    throw ShapeError("broadcast_mul: operand of shape " + shape_str(v.shape()) + " does not match axis " +
                     std::to_string(axis) + " of " + shape_str(xv.shape()));
  }
  const AxisSplit s = split_at(xv.shape(), axis);
  Tensor y = xv;
  const Tensor& vv = v.value();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t k = 0; k < s.inner; ++k) y[(o * s.n + j) * s.inner + k] *= vv[j];
  return t.record(std::move(y), {x, v}, [x, v, s](const Tensor& g, GradSink& sink) {
    const Tensor& vv = v.value();
    const Tensor& xv = x.value();
    Tensor* gx = sink.slot(x);
    Tensor* gv = sink.slot(v);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t j = 0; j < s.n; ++j)
        for (std::size_t k = 0; k < s.inner; ++k) {
          const std::size_t i = (o * s.n + j) * s.inner + k;
          if (gx) (*gx)[i] += g[i] * vv[j];
          if (gv) (*gv)[j] += g[i] * xv[i];
        }
  });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_rank("matmul", a.value(), 2);
  require_rank("matmul", b.value(), 2);
  if (a.value().dim(1) != b.value().dim(0)) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " axis 1 vs " +
                     shape_str(b.shape()) + " axis 0");
  }
  Tensor y({a.value().dim(0), b.value().dim(1)});
  y.matrix().noalias() = a.value().matrix() * b.value().matrix();
  return t.record(std::move(y), {a, b}, [a, b](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a)) ga->matrix().noalias() += g.matrix() * b.value().matrix().transpose();
    if (Tensor* gb = sink.slot(b)) gb->matrix().noalias() += a.value().matrix().transpose() * g.matrix();
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  require_rank("transpose", a.value(), 2);
  Tensor y({a.value().dim(1), a.value().dim(0)});
  y.matrix() = a.value().matrix().transpose();
  return t.record(std::move(y), {a}, [a](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a)) ga->matrix() += g.matrix().transpose();
  });
}

Var linear(Var x, Var w) {
  Tape& t = tape_of(x, w);
  require_rank("linear", x.value(), 2);
  require_rank("linear", w.value(), 2);
  if (x.value().dim(1) != w.value().dim(1)) {
    throw ShapeError("linear: input features " + shape_str(x.shape()) + " axis 1 vs weight " +
                     shape_str(w.shape()) + " axis 1");
  }
  Tensor y({x.value().dim(0), w.value().dim(0)});
  y.matrix().noalias() = x.value().matrix() * w.value().matrix().transpose();
  return t.record(std::move(y), {x, w}, [x, w](const Tensor& g, GradSink& sink) {
    if (Tensor* gx = sink.slot(x)) gx->matrix().noalias() += g.matrix() * w.value().matrix();
    if (Tensor* gw = sink.slot(w)) gw->matrix().noalias() += g.matrix().transpose() * x.value().matrix();
  });
}

Var linear(Var x, Var w, Var bias) { return broadcast_add(linear(x, w), bias, 1); }

Var inverse(Var a) {
  Tape& t = tape_of(a);
  require_rank("inverse", a.value(), 2);
  if (a.value().dim(0) != a.value().dim(1)) throw ShapeError("inverse: non-square " + shape_str(a.shape()));
  Eigen::PartialPivLU<RowMatrix> lu(a.value().matrix());
  const RowMatrix inv = lu.inverse();
  Tensor y = Tensor::from_matrix(inv);
  if (!y.all_finite() || lu.rcond() < 1e-15) throw NumericError("inverse: matrix is singular");
  return t.record(std::move(y), {a}, [a, t = &t](const Tensor& g, GradSink& sink) {
    (void)t;
    if (Tensor* ga = sink.slot(a)) {
      const RowMatrix inv = Eigen::PartialPivLU<RowMatrix>(a.value().matrix()).inverse();
      ga->matrix().noalias() -= inv.transpose() * g.matrix() * inv.transpose();
    }
  });
}

Var logdet(Var a) {
  Tape& t = tape_of(a);
  require_rank("logdet", a.value(), 2);
  if (a.value().dim(0) != a.value().dim(1)) throw ShapeError("logdet: non-square " + shape_str(a.shape()));
  Eigen::PartialPivLU<RowMatrix> lu(a.value().matrix());
  const double det = lu.determinant();
  if (!(det > 0) || !std::isfinite(det)) {
    // Fall back to the log-magnitude sum to handle under/overflow of det itself.
    double s = 0.0;
    int sign = 1;
    const auto& m = lu.matrixLU();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      s += std::log(std::abs(m(i, i)));
      if (m(i, i) < 0) sign = -sign;
    }
    const auto& p = lu.permutationP();
    if (p.determinant() < 0) sign = -sign;
    if (sign <= 0 || !std::isfinite(s)) throw NumericError("logdet: determinant is not positive");
    return t.record(Tensor::scalar(s), {a}, [a](const Tensor& g, GradSink& sink) {
      if (Tensor* ga = sink.slot(a)) {
        const RowMatrix inv = Eigen::PartialPivLU<RowMatrix>(a.value().matrix()).inverse();
        ga->matrix() += g[0] * inv.transpose();
      }
    });
  }
  return t.record(Tensor::scalar(std::log(det)), {a}, [a](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a)) {
      const RowMatrix inv = Eigen::PartialPivLU<RowMatrix>(a.value().matrix()).inverse();
      ga->matrix() += g[0] * inv.transpose();
    }
  });
}

Var trace(Var a) {
  Tape& t = tape_of(a);
  require_rank("trace", a.value(), 2);
  if (a.value().dim(0) != a.value().dim(1)) throw ShapeError("trace: non-square " + shape_str(a.shape()));
  const std::size_t n = a.value().dim(0);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a.value().at(i, i);
  return t.record(Tensor::scalar(s), {a}, [a, n](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a))
      for (std::size_t i = 0; i < n; ++i) ga->at(i, i) += g[0];
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = tape_of(a);
  Tensor y = a.value().reshaped(std::move(shape));
  return t.record(std::move(y), {a}, [a](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a))
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

Var slice(Var a, std::size_t axis, std::size_t start, std::size_t len) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (axis >= x.rank() || start + len > x.dim(axis)) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + len) + ") out of range on axis " +
                     std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  Tensor y(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(x.data() + (o * s.n + start) * s.inner, len * s.inner, y.data() + o * len * s.inner);
  return t.record(std::move(y), {a}, [a, s, start, len](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a))
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < len * s.inner; ++i)
          (*ga)[(o * s.n + start) * s.inner + i] += g[o * len * s.inner + i];
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ArgumentError("concat of zero tensors");
  Tape& t = tape_of(parts[0]);
  const Shape& ref = parts[0].shape();
  if (axis >= ref.size()) throw ShapeError("concat axis out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const Var& p : parts) {
    tape_of(parts[0], p);
    const Shape& s = p.shape();
    if (s.size() != ref.size()) throw ShapeError("concat: rank mismatch " + shape_str(ref) + " vs " + shape_str(s));
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != ref[i])
        throw ShapeError("concat: shape mismatch " + shape_str(ref) + " vs " + shape_str(s) + " at axis " +
                         std::to_string(i));
    total += s[axis];
  }
  Shape out_shape = ref;
  out_shape[axis] = total;
  const AxisSplit so = split_at(out_shape, axis);
  Tensor y(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    offsets.push_back(off);
    const std::size_t n = p.shape()[axis];
    const Tensor& v = p.value();
    for (std::size_t o = 0; o < so.outer; ++o)
      std::copy_n(v.data() + o * n * so.inner, n * so.inner, y.data() + (o * so.n + off) * so.inner);
    off += n;
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return t.record(std::move(y), ins, [ins, offsets, so, axis](const Tensor& g, GradSink& sink) {
    for (std::size_t k = 0; k < ins.size(); ++k) {
      Tensor* gp = sink.slot(ins[k]);
      if (!gp) continue;
      const std::size_t n = ins[k].shape()[axis];
      for (std::size_t o = 0; o < so.outer; ++o)
        for (std::size_t i = 0; i < n * so.inner; ++i)
          (*gp)[o * n * so.inner + i] += g[(o * so.n + offsets[k]) * so.inner + i];
    }
  });
}

Var stack(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("stack of zero tensors");
  std::vector<Var> lifted;
  lifted.reserve(parts.size());
  for (const Var& p : parts) {
    Shape s = p.shape();
    s.insert(s.begin(), 1);
    lifted.push_back(reshape(p, s));
  }
  return concat(lifted, 0);
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  return t.record(Tensor::scalar(a.value().sum()), {a}, [a](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a))
      for (double& v : ga->values()) v += g[0];
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var sum_axis(Var a, std::size_t axis) {
  Tape& t = tape_of(a);
  const Tensor& x = a.value();
  if (axis >= x.rank()) throw ShapeError("sum_axis: axis out of range for " + shape_str(x.shape()));
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape = {1};
  Tensor y(out_shape);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t j = 0; j < s.n; ++j)
      for (std::size_t k = 0; k < s.inner; ++k) y[o * s.inner + k] += x[(o * s.n + j) * s.inner + k];
  return t.record(std::move(y), {a}, [a, s](const Tensor& g, GradSink& sink) {
    if (Tensor* ga = sink.slot(a))
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t j = 0; j < s.n; ++j)
          for (std::size_t k = 0; k < s.inner; ++k) (*ga)[(o * s.n + j) * s.inner + k] += g[o * s.inner + k];
  });
}

Var conv2d(Var x, Var k, ConvOpts opts) {
  Tape& t = tape_of(x, k);
  const Tensor& xv = x.value();
  const Tensor& kv = k.value();
  require_rank("conv2d input", xv, 4);
  require_rank("conv2d kernel", kv, 4);
  if (opts.stride == 0) throw ArgumentError("conv2d: stride must be positive");
  const std::size_t b = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t cout = kv.dim(0), kh = kv.dim(2), kw = kv.dim(3);
  if (kv.dim(1) != cin) {
    throw ShapeError("conv2d: input channels " + shape_str(xv.shape()) + " axis 1 vs kernel " +
                     shape_str(kv.shape()) + " axis 1");
  }
  if (h + 2 * opts.pad < kh || w + 2 * opts.pad < kw) {
    throw ShapeError("conv2d: kernel " + shape_str(kv.shape()) + " does not fit input " + shape_str(xv.shape()));
  }
  const std::size_t ho = (h + 2 * opts.pad - kh) / opts.stride + 1;
  const std::size_t wo = (w + 2 * opts.pad - kw) / opts.stride + 1;
  Tensor y({b, cout, ho, wo});
  const ConstMatrixMap km(kv.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * kh * kw));
  RowMatrix cols;
  for (std::size_t n = 0; n < b; ++n) {
    im2col(xv.data() + n * cin * h * w, cin, h, w, kh, kw, opts, ho, wo, cols);
    MatrixMap ym(y.data() + n * cout * ho * wo, static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(ho * wo));
    ym.noalias() = km * cols;
  }
  return t.record(std::move(y), {x, k}, [=](const Tensor& g, GradSink& sink) {
    Tensor* gx = sink.slot(x);
    Tensor* gk = sink.slot(k);
    const Tensor& xv = x.value();
    const Tensor& kv = k.value();
    const ConstMatrixMap km(kv.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * kh * kw));
    RowMatrix cols, dcols;
    for (std::size_t n = 0; n < b; ++n) {
      const ConstMatrixMap gm(g.data() + n * cout * ho * wo, static_cast<Eigen::Index>(cout),
                              static_cast<Eigen::Index>(ho * wo));
      if (gk) {
        im2col(xv.data() + n * cin * h * w, cin, h, w, kh, kw, opts, ho, wo, cols);
        MatrixMap gkm(gk->data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * kh * kw));
        gkm.noalias() += gm * cols.transpose();
      }
      if (gx) {
        dcols.noalias() = km.transpose() * gm;
        col2im(dcols, cin, h, w, kh, kw, opts, ho, wo, gx->data() + n * cin * h * w);
      }
    }
  });
}

Var max_pool2d(Var x, std::size_t size) {
  Tape& t = tape_of(x);
  const Tensor& xv = x.value();
  require_rank("max_pool2d", xv, 4);
  if (size == 0) throw ArgumentError("max_pool2d: size must be positive");
  const std::size_t b = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t ho = h / size, wo = w / size;
  if (ho == 0 || wo == 0) throw ShapeError("max_pool2d: window larger than input " + shape_str(xv.shape()));
  Tensor y({b, c, ho, wo});
  std::vector<std::size_t> argmax(y.size());
  for (std::size_t n = 0; n < b * c; ++n)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        std::size_t best = n * h * w + (oy * size) * w + ox * size;
        for (std::size_t dy = 0; dy < size; ++dy)
          for (std::size_t dx = 0; dx < size; ++dx) {
            const std::size_t i = n * h * w + (oy * size + dy) * w + ox * size + dx;
            if (xv[i] > xv[best]) best = i;
          }
        const std::size_t o = (n * ho + oy) * wo + ox;
        y[o] = xv[best];
        argmax[o] = best;
      }
  return t.record(std::move(y), {x}, [x, argmax = std::move(argmax)](const Tensor& g, GradSink& sink) {
    if (Tensor* gx = sink.slot(x))
      for (std::size_t o = 0; o < g.size(); ++o) (*gx)[argmax[o]] += g[o];
  });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  Tape& t = tape_of(logits);
  const Tensor& z = logits.value();
  require_rank("cross_entropy", z, 2);
  const std::size_t b = z.dim(0), c = z.dim(1);
  if (labels.size() != b) throw ShapeError("cross_entropy: label count does not match batch axis 0");
  Tensor probs({b, c});
  double loss = 0.0;
  for (std::size_t n = 0; n < b; ++n) {
    if (labels[n] >= c) throw ArgumentError("cross_entropy: label out of range");
    double m = z.at(n, 0);
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, z.at(n, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(z.at(n, j) - m);
    for (std::size_t j = 0; j < c; ++j) probs.at(n, j) = std::exp(z.at(n, j) - m) / s;
    loss -= z.at(n, labels[n]) - m - std::log(s);
  }
  loss /= static_cast<double>(b);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return t.record(Tensor::scalar(loss), {logits},
                  [logits, probs = std::move(probs), lab = std::move(lab)](const Tensor& g, GradSink& sink) {
                    if (Tensor* gz = sink.slot(logits)) {
                      const std::size_t b = probs.dim(0), c = probs.dim(1);
                      const double f = g[0] / static_cast<double>(b);
                      for (std::size_t n = 0; n < b; ++n)
                        for (std::size_t j = 0; j < c; ++j)
                          gz->at(n, j) += f * (probs.at(n, j) - (j == lab[n] ? 1.0 : 0.0));
                    }
                  });
}

Var mse(Var a, Var b) { return mean(square(sub(a, b))); }

Var dot(Var a, Var b) { return sum(mul(a, b)); }

}  // namespace spikacom::dg
