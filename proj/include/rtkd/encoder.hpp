#pragma once

#include <cstdint>
#include <string>

#include "rtkd/config.hpp"
#include "rtkd/layers.hpp"

namespace rtkd {

template <typename Scalar>
struct EncoderLayerParams {
  NormParams<Scalar> norm1;
  LinearParams<Scalar> q;
  LinearParams<Scalar> k;
  LinearParams<Scalar> v;
  LinearParams<Scalar> proj;
  NormParams<Scalar> norm2;
  LinearParams<Scalar> fc1;
  LinearParams<Scalar> fc2;

  static EncoderLayerParams create(ParameterSet<Scalar>& set, const std::string& prefix,
                                   const ModelConfig& cfg);
};

/// Multi-head scaled dot-product self-attention over all rows of `x`.
/// If `attention` is given it receives the head-averaged N x N weights.
template <typename Scalar>
Tensor<Scalar> mhsa(const Tensor<Scalar>& x, const EncoderLayerParams<Scalar>& p, Index heads,
                    RowMatrix<Scalar>* attention = nullptr);

/// Pre-norm block: x + mhsa(LN1(x)), then + fc2(gelu(fc1(LN2(.)))).
template <typename Scalar>
Tensor<Scalar> encoder_layer(const Tensor<Scalar>& x, const EncoderLayerParams<Scalar>& p,
                             Index heads, RowMatrix<Scalar>* attention = nullptr);

/// Self-attention cost 4 N D^2 + 2 N^2 D. Throws DomainError for zero
/// arguments or when the count does not fit in 64 bits.
std::uint64_t sa_flops(std::uint64_t n, std::uint64_t d);

}  // namespace rtkd
