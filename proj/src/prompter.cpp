#include "rtkd/prompter.hpp"

namespace rtkd {

template <typename Scalar>
MmmpParams<Scalar> MmmpParams<Scalar>::create(ParameterSet<Scalar>& set, const std::string& prefix,
                                              const ModelConfig& cfg) {
  const Index n = cfg.tokens();
  const Index hidden = cfg.prompter_hidden();
  MmmpParams p;
  p.g_s1 = LinearParams<Scalar>::create(set, prefix + "/g_s1", n, hidden);
  p.g_s2 = LinearParams<Scalar>::create(set, prefix + "/g_s2", hidden, n);
  p.g_t_weight = set.add(prefix + "/g_t/weight", {2, 7});
  p.g_t_bias = set.add(prefix + "/g_t/bias", {1});
  return p;
}

namespace {

void require_tokens(const Shape& shape, Index n, const char* op) {
  if (shape.size() != 2 || shape[0] != n) {
    throw DimensionError(std::string(op) + ": expected " + std::to_string(n) + " x D tokens, got " +
                         shape_string(shape));
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> spatial_attention(const Tensor<Scalar>& h, const MmmpParams<Scalar>& p) {
  const Index n = p.g_s1.weight.dim(0);
  require_tokens(h.shape(), n, "spatial_attention");
  auto branch = [&](const Tensor<Scalar>& pooled) { return p.g_s2(relu(p.g_s1(pooled))); };
  const Tensor<Scalar> w = add(branch(reduce(h, 1, ReduceMode::kMean)),
                               branch(reduce(h, 1, ReduceMode::kMax)));
  return mul(h, reshape(w, Shape{n, 1}));
}

template <typename Scalar>
Tensor<Scalar> token_attention(const Tensor<Scalar>& h, const MmmpParams<Scalar>& p) {
  if (h.rank() != 2) {
    throw DimensionError("token_attention: expected N x D tokens, got " + shape_string(h.shape()));
  }
  const Index d = h.dim(1);
  const Tensor<Scalar> pooled = concat<Scalar>({reshape(reduce(h, 0, ReduceMode::kMean), Shape{1, d}),
                                                reshape(reduce(h, 0, ReduceMode::kMax), Shape{1, d})},
                                               0);
  return mul(h, conv1d_2to1(pooled, p.g_t_weight, p.g_t_bias));
}

template <typename Scalar>
Tensor<Scalar> fovea(const Tensor<Scalar>& h, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("fovea: lambda must be positive, got " + std::to_string(lambda));
  if (h.rank() != 2) throw DimensionError("fovea: expected N x D tokens, got " + shape_string(h.shape()));
  return mul(softmax(scale(h, static_cast<Scalar>(lambda)), 0), h);
}

template <typename Scalar>
Tensor<Scalar> mmmp_forward(const Tensor<Scalar>& self, const Tensor<Scalar>& other,
                            const Tensor<Scalar>* prev, const MmmpParams<Scalar>& p,
                            const PrompterOptions& options, double lambda) {
  if (other.shape() != self.shape() || (prev && prev->shape() != self.shape())) {
    throw DimensionError("mmmp_forward: inputs " + shape_string(self.shape()) + ", " +
                         shape_string(other.shape()) +
                         (prev ? ", " + shape_string(prev->shape()) : std::string()) +
                         " must share one shape");
  }
  auto attend = [&](const Tensor<Scalar>& x) {
    Tensor<Scalar> y = options.spatial ? spatial_attention(x, p) : x;
    return options.token ? token_attention(y, p) : y;
  };
  Tensor<Scalar> out = add(fovea(attend(self), lambda), attend(other));
  if (prev && options.history) out = add(out, attend(*prev));
  return out;
}

#define RTKD_INSTANTIATE_PROMPTER(S)                                                          \
  template struct MmmpParams<S>;                                                              \
  template Tensor<S> spatial_attention(const Tensor<S>&, const MmmpParams<S>&);               \
  template Tensor<S> token_attention(const Tensor<S>&, const MmmpParams<S>&);                 \
  template Tensor<S> fovea(const Tensor<S>&, double);                                         \
  template Tensor<S> mmmp_forward(const Tensor<S>&, const Tensor<S>&, const Tensor<S>*,       \
                                  const MmmpParams<S>&, const PrompterOptions&, double);

RTKD_INSTANTIATE_PROMPTER(float)
RTKD_INSTANTIATE_PROMPTER(double)

}  // namespace rtkd
