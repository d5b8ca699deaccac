#include "rtkd/ops.hpp"

#include <cmath>
#include <numbers>

#include "rtkd/errors.hpp"

namespace rtkd {

namespace {

template <typename Scalar>
using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

template <typename Scalar>
using Map = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMap = Eigen::Map<const RowMatrix<Scalar>>;

template <typename Scalar>
ConstMap<Scalar> as_matrix(const Buffer<Scalar>& buffer, Index rows, Index cols) {
  return ConstMap<Scalar>(buffer.data(), rows, cols);
}

template <typename Scalar>
Buffer<Scalar> flatten(const RowMatrix<Scalar>& m) {
  Buffer<Scalar> out(m.size());
  Map<Scalar>(out.data(), m.rows(), m.cols()) = m;
  return out;
}

void require_rank(const Shape& shape, std::size_t rank, const char* op) {
  if (shape.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_string(shape));
  }
}

// Splits `shape` around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_axis(const Shape& shape, Index axis, const char* op) {
  if (axis < 0 || axis >= static_cast<Index>(shape.size())) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (Index i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.extent = shape[static_cast<std::size_t>(axis)];
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) {
    s.inner *= shape[static_cast<std::size_t>(i)];
  }
  return s;
}

// --- broadcasting -----------------------------------------------------------

enum class Pattern { kSame, kColumn, kRow, kScalar };

Pattern broadcast_pattern(const Shape& full, const Shape& other, const char* op) {
  if (full == other) return Pattern::kSame;
  if (shape_numel(other) == 1) return Pattern::kScalar;
  if (full.size() == 2 && other.size() == 2) {
    if (other[0] == full[0] && other[1] == 1) return Pattern::kColumn;
    if (other[0] == 1 && other[1] == full[1]) return Pattern::kRow;
  }
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(other) + " against " +
                       shape_string(full));
}

template <typename Scalar>
Buffer<Scalar> expand(const Buffer<Scalar>& v, Pattern p, const Shape& full) {
  switch (p) {
    case Pattern::kSame:
      return v;
    case Pattern::kScalar:
      return Buffer<Scalar>::Constant(shape_numel(full), v[0]);
    case Pattern::kColumn: {
      RowMatrix<Scalar> m = ConstMap<Scalar>(v.data(), full[0], 1).replicate(1, full[1]);
      return flatten<Scalar>(m);
    }
    case Pattern::kRow: {
      RowMatrix<Scalar> m = ConstMap<Scalar>(v.data(), 1, full[1]).replicate(full[0], 1);
      return flatten<Scalar>(m);
    }
  }
  return v;
}

template <typename Scalar>
Buffer<Scalar> collapse(const Buffer<Scalar>& g, Pattern p, const Shape& full) {
  switch (p) {
    case Pattern::kSame:
      return g;
    case Pattern::kScalar:
      return Buffer<Scalar>::Constant(1, static_cast<Scalar>(g.template cast<double>().sum()));
    case Pattern::kColumn: {
      auto m = as_matrix(g, full[0], full[1]);
      return m.template cast<double>().rowwise().sum().template cast<Scalar>().array().eval();
    }
    case Pattern::kRow: {
      auto m = as_matrix(g, full[0], full[1]);
      RowMatrix<Scalar> r = m.template cast<double>().colwise().sum().template cast<Scalar>();
      return flatten<Scalar>(r);
    }
  }
  return g;
}

enum class Binary { kAdd, kSub, kMul };

template <typename Scalar>
Tensor<Scalar> binary(const Tensor<Scalar>& a_in, const Tensor<Scalar>& b_in, Binary kind,
                      const char* name) {
  // Put the full-size operand first; only sub is order-sensitive.
  const Tensor<Scalar>* a = &a_in;
  const Tensor<Scalar>* b = &b_in;
  if (a_in.numel() < b_in.numel()) {
    if (kind == Binary::kSub) {
      throw DimensionError(std::string(name) + ": broadcast operand must come second, got " +
                           shape_string(a_in.shape()) + " and " + shape_string(b_in.shape()));
    }
    std::swap(a, b);
  }
  const Shape full = a->shape();
  const Pattern p = broadcast_pattern(full, b->shape(), name);
  const Buffer<Scalar> bx = expand(b->values(), p, full);
  Buffer<Scalar> out;
  switch (kind) {
    case Binary::kAdd:
      out = a->values() + bx;
      break;
    case Binary::kSub:
      out = a->values() - bx;
      break;
    case Binary::kMul:
      out = a->values() * bx;
      break;
  }
  NodePtr<Scalar> an = a->node();
  NodePtr<Scalar> bn = b->node();
  return make_result<Scalar>(full, std::move(out), {a, b}, [an, bn, p, full, kind](auto& self) {
    const Buffer<Scalar>& g = self.grad;
    switch (kind) {
      case Binary::kAdd:
        an->accumulate(g);
        if (bn->requires_grad) bn->accumulate(collapse<Scalar>(g, p, full));
        break;
      case Binary::kSub:
        an->accumulate(g);
        if (bn->requires_grad) bn->accumulate(collapse<Scalar>((-g).eval(), p, full));
        break;
      case Binary::kMul:
        if (an->requires_grad) an->accumulate(g * expand(bn->value, p, full));
        if (bn->requires_grad) bn->accumulate(collapse<Scalar>((g * an->value).eval(), p, full));
        break;
    }
  });
}

// Shared scaffolding for pointwise unary maps with derivative df(x, y).
template <typename Scalar, typename F, typename DF>
Tensor<Scalar> unary(const Tensor<Scalar>& x, F f, DF df) {
  Buffer<Scalar> y = x.values().unaryExpr(f);
  NodePtr<Scalar> xn = x.node();
  Buffer<Scalar> y_saved = y;
  return make_result<Scalar>(x.shape(), std::move(y), {&x},
                             [xn, y_saved = std::move(y_saved), df](auto& self) {
                               Buffer<Scalar> d(xn->value.size());
                               for (Index i = 0; i < d.size(); ++i) {
                                 d[i] = self.grad[i] * df(xn->value[i], y_saved[i]);
                               }
                               xn->accumulate(d);
                             });
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_rank(a.shape(), 2, "matmul");
  require_rank(b.shape(), 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), p = b.dim(1);
  RowMatrix<Scalar> c = accurate_product<Scalar>(a.matrix(), b.matrix());
  NodePtr<Scalar> an = a.node();
  NodePtr<Scalar> bn = b.node();
  return make_result<Scalar>(Shape{m, p}, flatten<Scalar>(c), {&a, &b},
                             [an, bn, m, k, p](auto& self) {
                               auto g = as_matrix(self.grad, m, p);
                               if (an->requires_grad) {
                                 RowMatrix<Scalar> da = accurate_product<Scalar>(
                                     g, as_matrix(bn->value, k, p).transpose());
                                 an->accumulate(flatten<Scalar>(da));
                               }
                               if (bn->requires_grad) {
                                 RowMatrix<Scalar> db = accurate_product<Scalar>(
                                     as_matrix(an->value, m, k).transpose(), g);
                                 bn->accumulate(flatten<Scalar>(db));
                               }
                             });
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x) {
  require_rank(x.shape(), 2, "transpose");
  const Index r = x.dim(0), c = x.dim(1);
  RowMatrix<Scalar> t = x.matrix().transpose();
  NodePtr<Scalar> xn = x.node();
  return make_result<Scalar>(Shape{c, r}, flatten<Scalar>(t), {&x}, [xn, r, c](auto& self) {
    RowMatrix<Scalar> g = as_matrix(self.grad, c, r).transpose();
    xn->accumulate(flatten<Scalar>(g));
  });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, Binary::kAdd, "add");
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, Binary::kSub, "sub");
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary(a, b, Binary::kMul, "mul");
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor) {
  NodePtr<Scalar> xn = x.node();
  return make_result<Scalar>(x.shape(), x.values() * factor, {&x},
                             [xn, factor](auto& self) { xn->accumulate(self.grad * factor); });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar offset) {
  NodePtr<Scalar> xn = x.node();
  return make_result<Scalar>(x.shape(), x.values() + offset, {&x},
                             [xn](auto& self) { xn->accumulate(self.grad); });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return v > Scalar(0) ? v : Scalar(0); },
      [](Scalar v, Scalar) { return v > Scalar(0) ? Scalar(1) : Scalar(0); });
}

template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  return unary(
      x,
      [](Scalar v) {
        const double d = v;
        return static_cast<Scalar>(0.5 * d * (1.0 + std::tanh(kC * (d + kA * d * d * d))));
      },
      [](Scalar v, Scalar) {
        const double d = v;
        const double t = std::tanh(kC * (d + kA * d * d * d));
        return static_cast<Scalar>(0.5 * (1.0 + t) +
                                   0.5 * d * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * d * d));
      });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  return unary(
      x,
      [](Scalar v) {
        const double d = v;
        return static_cast<Scalar>(d >= 0 ? 1.0 / (1.0 + std::exp(-d))
                                          : std::exp(d) / (1.0 + std::exp(d)));
      },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

template <typename Scalar>
Tensor<Scalar> absolute(const Tensor<Scalar>& x) {
  return unary(
      x, [](Scalar v) { return std::abs(v); },
      [](Scalar v, Scalar) {
        return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
      });
}

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  const Buffer<Scalar>& in = x.values();
  if (!in.allFinite()) throw NumericError("softmax: non-finite input");
  Buffer<Scalar> out(in.size());
  std::vector<double> expo(static_cast<std::size_t>(s.extent));
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.extent * s.inner + i;
      double peak = in[base];
      for (Index k = 1; k < s.extent; ++k) peak = std::max(peak, double(in[base + k * s.inner]));
      double total = 0.0;
      for (Index k = 0; k < s.extent; ++k) {
        expo[static_cast<std::size_t>(k)] = std::exp(double(in[base + k * s.inner]) - peak);
        total += expo[static_cast<std::size_t>(k)];
      }
      for (Index k = 0; k < s.extent; ++k) {
        out[base + k * s.inner] = static_cast<Scalar>(expo[static_cast<std::size_t>(k)] / total);
      }
    }
  }
  NodePtr<Scalar> xn = x.node();
  Buffer<Scalar> y = out;
  return make_result<Scalar>(x.shape(), std::move(out), {&x}, [xn, y = std::move(y), s](auto& self) {
    // dx = y * (g - sum_k g_k y_k)
    Buffer<Scalar> d(y.size());
    for (Index o = 0; o < s.outer; ++o) {
      for (Index i = 0; i < s.inner; ++i) {
        const Index base = o * s.extent * s.inner + i;
        double dot = 0.0;
        for (Index k = 0; k < s.extent; ++k) {
          dot += double(self.grad[base + k * s.inner]) * double(y[base + k * s.inner]);
        }
        for (Index k = 0; k < s.extent; ++k) {
          const Index j = base + k * s.inner;
          d[j] = static_cast<Scalar>(double(y[j]) * (double(self.grad[j]) - dot));
        }
      }
    }
    xn->accumulate(d);
  });
}

template <typename Scalar>
Tensor<Scalar> reduce(const Tensor<Scalar>& x, Index axis, ReduceMode mode) {
  const AxisSplit s = split_axis(x.shape(), axis, "reduce");
  if (s.extent == 0) throw DomainError("reduce: zero-extent axis");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + axis);
  if (out_shape.empty()) out_shape.push_back(1);
  const Buffer<Scalar>& in = x.values();
  Buffer<Scalar> out(s.outer * s.inner);
  std::vector<Index> argmax;
  if (mode == ReduceMode::kMax) argmax.resize(static_cast<std::size_t>(out.size()));
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.extent * s.inner + i;
      const Index dst = o * s.inner + i;
      if (mode == ReduceMode::kMean) {
        double total = 0.0;
        for (Index k = 0; k < s.extent; ++k) total += in[base + k * s.inner];
        out[dst] = static_cast<Scalar>(total / double(s.extent));
      } else {
        Index best = 0;
        for (Index k = 1; k < s.extent; ++k) {
          if (in[base + k * s.inner] > in[base + best * s.inner]) best = k;
        }
        argmax[static_cast<std::size_t>(dst)] = best;
        out[dst] = in[base + best * s.inner];
      }
    }
  }
  NodePtr<Scalar> xn = x.node();
  return make_result<Scalar>(
      std::move(out_shape), std::move(out), {&x},
      [xn, s, mode, argmax = std::move(argmax)](auto& self) {
        Buffer<Scalar> d = Buffer<Scalar>::Zero(xn->value.size());
        for (Index o = 0; o < s.outer; ++o) {
          for (Index i = 0; i < s.inner; ++i) {
            const Index base = o * s.extent * s.inner + i;
            const Scalar g = self.grad[o * s.inner + i];
            if (mode == ReduceMode::kMean) {
              const Scalar share = static_cast<Scalar>(double(g) / double(s.extent));
              for (Index k = 0; k < s.extent; ++k) d[base + k * s.inner] = share;
            } else {
              d[base + argmax[static_cast<std::size_t>(o * s.inner + i)] * s.inner] = g;
            }
          }
        }
        xn->accumulate(d);
      });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x) {
  Buffer<Scalar> out(1);
  out[0] = static_cast<Scalar>(x.values().template cast<double>().sum());
  NodePtr<Scalar> xn = x.node();
  return make_result<Scalar>(Shape{1}, std::move(out), {&x}, [xn](auto& self) {
    xn->accumulate(Buffer<Scalar>::Constant(xn->value.size(), self.grad[0]));
  });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x) {
  const double n = static_cast<double>(x.numel());
  Buffer<Scalar> out(1);
  out[0] = static_cast<Scalar>(x.values().template cast<double>().sum() / n);
  NodePtr<Scalar> xn = x.node();
  return make_result<Scalar>(Shape{1}, std::move(out), {&x}, [xn, n](auto& self) {
    xn->accumulate(
        Buffer<Scalar>::Constant(xn->value.size(), static_cast<Scalar>(self.grad[0] / n)));
  });
}

template <typename Scalar>
Tensor<Scalar> mse(const Tensor<Scalar>& x, const Buffer<Scalar>& target) {
  if (target.size() != x.numel()) {
    throw DimensionError("mse: target has " + std::to_string(target.size()) +
                         " elements, input " + shape_string(x.shape()));
  }
  const double n = static_cast<double>(x.numel());
  Eigen::ArrayXd diff = x.values().template cast<double>() - target.template cast<double>();
  Buffer<Scalar> out(1);
  out[0] = static_cast<Scalar>(diff.square().sum() / n);
  NodePtr<Scalar> xn = x.node();
  return make_result<Scalar>(Shape{1}, std::move(out), {&x}, [xn, diff, n](auto& self) {
    xn->accumulate((diff * (2.0 * double(self.grad[0]) / n)).template cast<Scalar>());
  });
}

template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b) {
  require_rank(w.shape(), 2, "linear weight");
  const Index k = w.dim(0), p = w.dim(1);
  if (x.shape().back() != k || b.numel() != p) {
    throw DimensionError("linear: input " + shape_string(x.shape()) + ", weight " +
                         shape_string(w.shape()) + ", bias " + shape_string(b.shape()));
  }
  const Index rows = x.numel() / k;
  RowMatrix<Scalar> y = accurate_product<Scalar>(x.matrix(), w.matrix());
  y.rowwise() += as_matrix(b.values(), 1, p).row(0);
  Shape out_shape = x.shape();
  out_shape.back() = p;
  NodePtr<Scalar> xn = x.node();
  NodePtr<Scalar> wn = w.node();
  NodePtr<Scalar> bn = b.node();
  return make_result<Scalar>(
      std::move(out_shape), flatten<Scalar>(y), {&x, &w, &b}, [xn, wn, bn, rows, k, p](auto& self) {
        auto g = as_matrix(self.grad, rows, p);
        if (xn->requires_grad) {
          RowMatrix<Scalar> dx = accurate_product<Scalar>(g, as_matrix(wn->value, k, p).transpose());
          xn->accumulate(flatten<Scalar>(dx));
        }
        if (wn->requires_grad) {
          RowMatrix<Scalar> dw =
              accurate_product<Scalar>(as_matrix(xn->value, rows, k).transpose(), g);
          wn->accumulate(flatten<Scalar>(dw));
        }
        if (bn->requires_grad) {
          RowMatrix<Scalar> db = g.template cast<double>().colwise().sum().template cast<Scalar>();
          bn->accumulate(flatten<Scalar>(db));
        }
      });
}

template <typename Scalar>
Tensor<Scalar> conv1d_2to1(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel,
                           const Tensor<Scalar>& bias) {
  constexpr Index kWidth = 7;
  constexpr Index kPad = 3;
  if (x.rank() != 2 || x.dim(0) != 2 || kernel.numel() != 2 * kWidth || bias.numel() != 1) {
    throw DimensionError("conv1d_2to1: input " + shape_string(x.shape()) + ", kernel " +
                         shape_string(kernel.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const Index d = x.dim(1);
  const Buffer<Scalar>& xv = x.values();
  const Buffer<Scalar>& kv = kernel.values();
  Buffer<Scalar> out(d);
  for (Index j = 0; j < d; ++j) {
    double acc = bias.values()[0];
    for (Index c = 0; c < 2; ++c) {
      for (Index t = 0; t < kWidth; ++t) {
        const Index src = j + t - kPad;
        if (src >= 0 && src < d) acc += double(kv[c * kWidth + t]) * double(xv[c * d + src]);
      }
    }
    out[j] = static_cast<Scalar>(acc);
  }
  NodePtr<Scalar> xn = x.node();
  NodePtr<Scalar> kn = kernel.node();
  NodePtr<Scalar> bn = bias.node();
  return make_result<Scalar>(Shape{1, d}, std::move(out), {&x, &kernel, &bias},
                             [xn, kn, bn, d](auto& self) {
                               Buffer<Scalar> dx = Buffer<Scalar>::Zero(2 * d);
                               Buffer<Scalar> dk = Buffer<Scalar>::Zero(2 * kWidth);
                               double db = 0.0;
                               for (Index j = 0; j < d; ++j) {
                                 const double g = self.grad[j];
                                 db += g;
                                 for (Index c = 0; c < 2; ++c) {
                                   for (Index t = 0; t < kWidth; ++t) {
                                     const Index src = j + t - kPad;
                                     if (src < 0 || src >= d) continue;
                                     dx[c * d + src] += static_cast<Scalar>(g * kn->value[c * kWidth + t]);
                                     dk[c * kWidth + t] += static_cast<Scalar>(g * xn->value[c * d + src]);
                                   }
                                 }
                               }
                               xn->accumulate(dx);
                               kn->accumulate(dk);
                               bn->accumulate(Buffer<Scalar>::Constant(1, static_cast<Scalar>(db)));
                             });
}

template <typename Scalar>
Tensor<Scalar> conv2d_3x3(const Tensor<Scalar>& x, Index rows, Index cols,
                          const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  require_rank(x.shape(), 2, "conv2d_3x3");
  const Index cin = x.dim(1);
  if (x.dim(0) != rows * cols || weight.rank() != 2 || weight.dim(0) != 9 * cin ||
      bias.numel() != weight.dim(1)) {
    throw DimensionError("conv2d_3x3: input " + shape_string(x.shape()) + " on " +
                         std::to_string(rows) + "x" + std::to_string(cols) + " grid, weight " +
                         shape_string(weight.shape()) + ", bias " + shape_string(bias.shape()));
  }
  const Index cout = weight.dim(1);
  const Index cells = rows * cols;
  // im2col: one row of 9*C_in taps per output cell.
  RowMatrix<Scalar> patches = RowMatrix<Scalar>::Zero(cells, 9 * cin);
  auto xm = x.matrix();
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      for (Index ky = 0; ky < 3; ++ky) {
        for (Index kx = 0; kx < 3; ++kx) {
          const Index sr = r + ky - 1, sc = c + kx - 1;
          if (sr < 0 || sr >= rows || sc < 0 || sc >= cols) continue;
          patches.block(r * cols + c, (ky * 3 + kx) * cin, 1, cin) = xm.row(sr * cols + sc);
        }
      }
    }
  }
  RowMatrix<Scalar> y = accurate_product<Scalar>(patches, weight.matrix());
  y.rowwise() += as_matrix(bias.values(), 1, cout).row(0);
  NodePtr<Scalar> xn = x.node();
  NodePtr<Scalar> wn = weight.node();
  NodePtr<Scalar> bn = bias.node();
  return make_result<Scalar>(
      Shape{cells, cout}, flatten<Scalar>(y), {&x, &weight, &bias},
      [xn, wn, bn, patches = std::move(patches), rows, cols, cin, cout](auto& self) {
        auto g = as_matrix(self.grad, rows * cols, cout);
        if (xn->requires_grad) {
          RowMatrix<Scalar> dp =
              accurate_product<Scalar>(g, as_matrix(wn->value, 9 * cin, cout).transpose());
          RowMatrix<Scalar> dx = RowMatrix<Scalar>::Zero(rows * cols, cin);
          for (Index r = 0; r < rows; ++r) {
            for (Index c = 0; c < cols; ++c) {
              for (Index ky = 0; ky < 3; ++ky) {
                for (Index kx = 0; kx < 3; ++kx) {
                  const Index sr = r + ky - 1, sc = c + kx - 1;
                  if (sr < 0 || sr >= rows || sc < 0 || sc >= cols) continue;
                  dx.row(sr * cols + sc) += dp.block(r * cols + c, (ky * 3 + kx) * cin, 1, cin);
                }
              }
            }
          }
          xn->accumulate(flatten<Scalar>(dx));
        }
        if (wn->requires_grad) {
          RowMatrix<Scalar> dw = accurate_product<Scalar>(patches.transpose(), g);
          wn->accumulate(flatten<Scalar>(dw));
        }
        if (bn->requires_grad) {
          RowMatrix<Scalar> db = g.template cast<double>().colwise().sum().template cast<Scalar>();
          bn->accumulate(flatten<Scalar>(db));
        }
      });
}

template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, double eps) {
  const Index d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: input " + shape_string(x.shape()) + ", gamma " +
                         shape_string(gamma.shape()) + ", beta " + shape_string(beta.shape()));
  }
  const Index rows = x.numel() / d;
  Eigen::MatrixXd xhat = x.matrix().template cast<double>();
  Eigen::VectorXd inv_std(rows);
  for (Index r = 0; r < rows; ++r) {
    const double mu = xhat.row(r).mean();
    xhat.row(r).array() -= mu;
    const double var = xhat.row(r).squaredNorm() / double(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    xhat.row(r) *= inv_std[r];
  }
  const Eigen::RowVectorXd g = as_matrix(gamma.values(), 1, d).template cast<double>();
  const Eigen::RowVectorXd b = as_matrix(beta.values(), 1, d).template cast<double>();
  RowMatrix<Scalar> y =
      ((xhat.array().rowwise() * g.array()).rowwise() + b.array()).matrix().template cast<Scalar>();
  NodePtr<Scalar> xn = x.node();
  NodePtr<Scalar> gn = gamma.node();
  NodePtr<Scalar> bn = beta.node();
  return make_result<Scalar>(
      x.shape(), flatten<Scalar>(y), {&x, &gamma, &beta},
      [xn, gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), g, rows, d](auto& self) {
        const Eigen::MatrixXd up = as_matrix(self.grad, rows, d).template cast<double>();
        if (xn->requires_grad) {
          Eigen::MatrixXd dxhat = up.array().rowwise() * g.array();
          Eigen::MatrixXd dx(rows, d);
          for (Index r = 0; r < rows; ++r) {
            const double m1 = dxhat.row(r).mean();
            const double m2 = dxhat.row(r).dot(xhat.row(r)) / double(d);
            dx.row(r) = inv_std[r] * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
          }
          xn->accumulate(flatten<Scalar>(dx.template cast<Scalar>()));
        }
        if (gn->requires_grad) {
          RowMatrix<Scalar> dg = (up.array() * xhat.array()).colwise().sum().template cast<Scalar>();
          gn->accumulate(flatten<Scalar>(dg));
        }
        if (bn->requires_grad) {
          RowMatrix<Scalar> db = up.colwise().sum().template cast<Scalar>();
          bn->accumulate(flatten<Scalar>(db));
        }
      });
}

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, Index axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  for (const auto& p : parts) require_rank(p.shape(), 2, "concat");
  const Index fixed = parts.front().dim(1 - axis);
  Index total = 0;
  std::vector<Index> extents;
  for (const auto& p : parts) {
    if (p.dim(1 - axis) != fixed) {
      throw DimensionError("concat: mismatched shapes " + shape_string(parts.front().shape()) +
                           " and " + shape_string(p.shape()));
    }
    extents.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  const Index rows = axis == 0 ? total : fixed;
  const Index cols = axis == 0 ? fixed : total;
  RowMatrix<Scalar> out(rows, cols);
  Index offset = 0;
  for (const auto& p : parts) {
    if (axis == 0) {
      out.middleRows(offset, p.dim(0)) = p.matrix();
    } else {
      out.middleCols(offset, p.dim(1)) = p.matrix();
    }
    offset += p.dim(axis);
  }
  std::vector<NodePtr<Scalar>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  return make_result<Scalar>(Shape{rows, cols}, flatten<Scalar>(out), parts,
                             [nodes, extents, axis, rows, cols](auto& self) {
                               auto g = as_matrix(self.grad, rows, cols);
                               Index offset = 0;
                               for (std::size_t i = 0; i < nodes.size(); ++i) {
                                 const Index e = extents[i];
                                 if (nodes[i]->requires_grad) {
                                   RowMatrix<Scalar> part = axis == 0 ? RowMatrix<Scalar>(g.middleRows(offset, e))
                                                                      : RowMatrix<Scalar>(g.middleCols(offset, e));
                                   nodes[i]->accumulate(flatten<Scalar>(part));
                                 }
                                 offset += e;
                               }
                             });
}

template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Index axis, Index start, Index length) {
  require_rank(x.shape(), 2, "slice");
  if (axis != 0 && axis != 1) throw DimensionError("slice: axis must be 0 or 1");
  if (start < 0 || length <= 0 || start + length > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") outside " + shape_string(x.shape()));
  }
  const Index rows = x.dim(0), cols = x.dim(1);
  RowMatrix<Scalar> out = axis == 0 ? RowMatrix<Scalar>(x.matrix().middleRows(start, length))
                                    : RowMatrix<Scalar>(x.matrix().middleCols(start, length));
  Shape shape = axis == 0 ? Shape{length, cols} : Shape{rows, length};
  NodePtr<Scalar> xn = x.node();
  return make_result<Scalar>(shape, flatten<Scalar>(out), {&x},
                             [xn, axis, start, length, rows, cols](auto& self) {
                               RowMatrix<Scalar> d = RowMatrix<Scalar>::Zero(rows, cols);
                               if (axis == 0) {
                                 d.middleRows(start, length) = as_matrix(self.grad, length, cols);
                               } else {
                                 d.middleCols(start, length) = as_matrix(self.grad, rows, length);
                               }
                               xn->accumulate(flatten<Scalar>(d));
                             });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  NodePtr<Scalar> xn = x.node();
  return make_result<Scalar>(std::move(shape), x.values(), {&x},
                             [xn](auto& self) { xn->accumulate(self.grad); });
}

#define RTKD_INSTANTIATE_OPS(S)                                                              \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                             \
  template Tensor<S> transpose(const Tensor<S>&);                                            \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> scale(const Tensor<S>&, S);                                             \
  template Tensor<S> add_scalar(const Tensor<S>&, S);                                        \
  template Tensor<S> relu(const Tensor<S>&);                                                 \
  template Tensor<S> gelu(const Tensor<S>&);                                                 \
  template Tensor<S> sigmoid(const Tensor<S>&);                                              \
  template Tensor<S> absolute(const Tensor<S>&);                                             \
  template Tensor<S> softmax(const Tensor<S>&, Index);                                       \
  template Tensor<S> reduce(const Tensor<S>&, Index, ReduceMode);                            \
  template Tensor<S> sum(const Tensor<S>&);                                                  \
  template Tensor<S> mean(const Tensor<S>&);                                                 \
  template Tensor<S> mse(const Tensor<S>&, const Buffer<S>&);                                \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);           \
  template Tensor<S> conv1d_2to1(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);      \
  template Tensor<S> conv2d_3x3(const Tensor<S>&, Index, Index, const Tensor<S>&,            \
                                const Tensor<S>&);                                           \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, double); \
  template Tensor<S> concat(const std::vector<Tensor<S>>&, Index);                           \
  template Tensor<S> slice(const Tensor<S>&, Index, Index, Index);                           \
  template Tensor<S> reshape(const Tensor<S>&, Shape);

RTKD_INSTANTIATE_OPS(float)
RTKD_INSTANTIATE_OPS(double)

}  // namespace rtkd
