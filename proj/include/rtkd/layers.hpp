#pragma once

#include <string>

#include "rtkd/ops.hpp"
#include "rtkd/parameters.hpp"

namespace rtkd {

template <typename Scalar>
struct LinearParams {
  Tensor<Scalar> weight;  // [in x out]
  Tensor<Scalar> bias;    // [out]

  static LinearParams create(ParameterSet<Scalar>& set, const std::string& name, Index in,
                             Index out) {
    return {set.add(name + "/weight", {in, out}), set.add(name + "/bias", {out})};
  }
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return linear(x, weight, bias); }
};

template <typename Scalar>
struct NormParams {
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;

  static NormParams create(ParameterSet<Scalar>& set, const std::string& name, Index dim) {
    return {set.add(name + "/gamma", {dim}), set.add(name + "/beta", {dim})};
  }
  Tensor<Scalar> operator()(const Tensor<Scalar>& x) const { return layer_norm(x, gamma, beta); }
};

template <typename Scalar>
struct Conv3x3Params {
  Tensor<Scalar> weight;  // [9 * in x out]
  Tensor<Scalar> bias;    // [out]

  static Conv3x3Params create(ParameterSet<Scalar>& set, const std::string& name, Index in,
                              Index out) {
    return {set.add(name + "/weight", {9 * in, out}), set.add(name + "/bias", {out})};
  }
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Index rows, Index cols) const {
    return conv2d_3x3(x, rows, cols, weight, bias);
  }
};

}  // namespace rtkd
