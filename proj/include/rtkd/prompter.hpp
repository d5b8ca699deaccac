#pragma once

#include <string>

#include "rtkd/config.hpp"
#include "rtkd/layers.hpp"

namespace rtkd {

/// One mutual prompter. The same projections serve all three of its input
/// branches (self, other modality, previous prompt).
template <typename Scalar>
struct MmmpParams {
  LinearParams<Scalar> g_s1;  // N -> ceil(N / r)
  LinearParams<Scalar> g_s2;  // ceil(N / r) -> N
  Tensor<Scalar> g_t_weight;  // [2 x 7]
  Tensor<Scalar> g_t_bias;    // [1]

  static MmmpParams create(ParameterSet<Scalar>& set, const std::string& prefix,
                           const ModelConfig& cfg);
};

/// Per-token reweighting: pools over D with mean and max, passes each pool
/// through g_s2(relu(g_s1(.))), sums the two and scales every row of H.
template <typename Scalar>
Tensor<Scalar> spatial_attention(const Tensor<Scalar>& h, const MmmpParams<Scalar>& p);

/// Per-channel reweighting: pools over N with mean and max, stacks the two
/// rows and reduces them to one with the width-7 convolution g_t.
template <typename Scalar>
Tensor<Scalar> token_attention(const Tensor<Scalar>& h, const MmmpParams<Scalar>& p);

/// mask[:, d] = softmax over tokens of lambda * h[:, d]; returns mask * h.
template <typename Scalar>
Tensor<Scalar> fovea(const Tensor<Scalar>& h, double lambda);

/// fovea(A(self)) + A(other) + A(prev), with A = token_attention after
/// spatial_attention. `prev` may be null (the first prompter) and is also
/// skipped when options.history is off.
template <typename Scalar>
Tensor<Scalar> mmmp_forward(const Tensor<Scalar>& self, const Tensor<Scalar>& other,
                            const Tensor<Scalar>* prev, const MmmpParams<Scalar>& p,
                            const PrompterOptions& options, double lambda);

}  // namespace rtkd
