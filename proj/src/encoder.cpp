#include "rtkd/encoder.hpp"

#include <cmath>
#include <limits>

namespace rtkd {

template <typename Scalar>
EncoderLayerParams<Scalar> EncoderLayerParams<Scalar>::create(ParameterSet<Scalar>& set,
                                                              const std::string& prefix,
                                                              const ModelConfig& cfg) {
  const Index d = cfg.dim;
  const Index hidden = cfg.dim * cfg.mlp_ratio;
  EncoderLayerParams p;
  p.norm1 = NormParams<Scalar>::create(set, prefix + "/norm1", d);
  p.q = LinearParams<Scalar>::create(set, prefix + "/attn/q", d, d);
  p.k = LinearParams<Scalar>::create(set, prefix + "/attn/k", d, d);
  p.v = LinearParams<Scalar>::create(set, prefix + "/attn/v", d, d);
  p.proj = LinearParams<Scalar>::create(set, prefix + "/attn/proj", d, d);
  p.norm2 = NormParams<Scalar>::create(set, prefix + "/norm2", d);
  p.fc1 = LinearParams<Scalar>::create(set, prefix + "/mlp/fc1", d, hidden);
  p.fc2 = LinearParams<Scalar>::create(set, prefix + "/mlp/fc2", hidden, d);
  return p;
}

template <typename Scalar>
Tensor<Scalar> mhsa(const Tensor<Scalar>& x, const EncoderLayerParams<Scalar>& p, Index heads,
                    RowMatrix<Scalar>* attention) {
  if (x.rank() != 2) throw DimensionError("mhsa: expected N x D tokens, got " + shape_string(x.shape()));
  const Index n = x.dim(0);
  const Index d = x.dim(1);
  if (heads <= 0 || d % heads != 0) {
    throw DimensionError("mhsa: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  const Index dk = d / heads;
  const Scalar inv_sqrt = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(dk)));
  const Tensor<Scalar> q = p.q(x);
  const Tensor<Scalar> k = p.k(x);
  const Tensor<Scalar> v = p.v(x);
  if (attention) attention->setZero(n, n);
  std::vector<Tensor<Scalar>> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (Index h = 0; h < heads; ++h) {
    const Tensor<Scalar> qh = slice(q, 1, h * dk, dk);
    const Tensor<Scalar> kh = slice(k, 1, h * dk, dk);
    const Tensor<Scalar> vh = slice(v, 1, h * dk, dk);
    const Tensor<Scalar> weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
    if (attention) *attention += weights.matrix();
    outs.push_back(matmul(weights, vh));
  }
  if (attention) *attention /= static_cast<Scalar>(heads);
  return p.proj(heads == 1 ? outs.front() : concat(outs, 1));
}

template <typename Scalar>
Tensor<Scalar> encoder_layer(const Tensor<Scalar>& x, const EncoderLayerParams<Scalar>& p,
                             Index heads, RowMatrix<Scalar>* attention) {
  const Tensor<Scalar> h = add(x, mhsa(p.norm1(x), p, heads, attention));
  return add(h, p.fc2(gelu(p.fc1(p.norm2(h)))));
}

std::uint64_t sa_flops(std::uint64_t n, std::uint64_t d) {
  if (n == 0 || d == 0) throw DomainError("sa_flops: N and D must be at least 1");
  using Wide = unsigned __int128;
  bool overflow = false;
  auto mul = [&](Wide a, Wide b) {
    Wide r = 0;
    overflow |= __builtin_mul_overflow(a, b, &r);
    return r;
  };
  const Wide linear_part = mul(mul(mul(4, n), d), d);
  const Wide quadratic_part = mul(mul(mul(2, n), n), d);
  const Wide flops = linear_part + quadratic_part;
  if (overflow || flops < linear_part || flops > std::numeric_limits<std::uint64_t>::max()) {
    throw DomainError("sa_flops: count for N=" + std::to_string(n) + ", D=" + std::to_string(d) +
                      " exceeds 64 bits");
  }
  return static_cast<std::uint64_t>(flops);
}

#define RTKD_INSTANTIATE_ENCODER(S)                                                             \
  template struct EncoderLayerParams<S>;                                                        \
  template Tensor<S> mhsa(const Tensor<S>&, const EncoderLayerParams<S>&, Index, RowMatrix<S>*); \
  template Tensor<S> encoder_layer(const Tensor<S>&, const EncoderLayerParams<S>&, Index,       \
                                   RowMatrix<S>*);

RTKD_INSTANTIATE_ENCODER(float)
RTKD_INSTANTIATE_ENCODER(double)

}  // namespace rtkd
