#pragma once

#include <vector>

#include "rtkd/tensor.hpp"

// Differentiable primitives. Every function here records a backward closure
// when any input requires a gradient. float instantiations accumulate matrix
// products, means and softmax normalizers in double.

namespace rtkd {

enum class ReduceMode { kMean, kMax };

/// [M x K] * [K x P] -> [M x P]
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Rank-2 transpose.
template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& x);

// Binary elementwise ops. Operands either share a shape or the second is a
// rank-2 N x 1 column, a 1 x D row, or a single element broadcast against an
// N x D first operand. add and mul also accept the broadcast operand first.
template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b);
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor);
template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar offset);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);
/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename Scalar>
Tensor<Scalar> gelu(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);
/// |x|, with zero subgradient at 0.
template <typename Scalar>
Tensor<Scalar> absolute(const Tensor<Scalar>& x);

/// Max-subtracted softmax along `axis`. Non-finite input raises NumericError.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x, Index axis);

/// Collapses `axis`. kMax routes the gradient to the first maximal entry.
template <typename Scalar>
Tensor<Scalar> reduce(const Tensor<Scalar>& x, Index axis, ReduceMode mode);

/// Sum / mean of all entries, shape [1].
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& x);
template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& x);

/// Mean squared error against a constant target of the same element count.
template <typename Scalar>
Tensor<Scalar> mse(const Tensor<Scalar>& x, const Buffer<Scalar>& target);

/// x [..., K] * w [K x P] + b [P] along the last axis.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b);

/// 2-channel to 1-channel 1-D convolution of width 7 with zero padding 3:
/// out[d] = bias + sum_c sum_k kernel[c, k] * x[c, d + k - 3].
template <typename Scalar>
Tensor<Scalar> conv1d_2to1(const Tensor<Scalar>& x, const Tensor<Scalar>& kernel,
                           const Tensor<Scalar>& bias);

/// 3x3 convolution with zero padding 1 over a row-major grid stored as
/// [rows*cols x C_in] tokens. `weight` is [9*C_in x C_out] with row index
/// (ky*3 + kx)*C_in + c; `bias` is [C_out].
template <typename Scalar>
Tensor<Scalar> conv2d_3x3(const Tensor<Scalar>& x, Index rows, Index cols,
                          const Tensor<Scalar>& weight, const Tensor<Scalar>& bias);

/// Per-row normalization over the last axis followed by gamma/beta.
template <typename Scalar>
Tensor<Scalar> layer_norm(const Tensor<Scalar>& x, const Tensor<Scalar>& gamma,
                          const Tensor<Scalar>& beta, double eps = 1e-5);

/// Rank-2 concatenation along axis 0 (rows) or 1 (columns).
template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, Index axis);

/// Rank-2 slice [start, start + length) along axis 0 or 1.
template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& x, Index axis, Index start, Index length);

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape);

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return add(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return sub(a, b);
}
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return mul(a, b);
}

/// Matrix product with double accumulation regardless of Scalar.
template <typename Scalar, typename A, typename B>
RowMatrix<Scalar> accurate_product(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if constexpr (std::is_same_v<Scalar, double>) {
    return a * b;
  } else {
    return (a.template cast<double>() * b.template cast<double>()).template cast<Scalar>();
  }
}

}  // namespace rtkd
