#pragma once

#include <optional>
#include <string>

#include "rtkd/config.hpp"
#include "rtkd/image.hpp"
#include "rtkd/layers.hpp"

namespace rtkd {

/// Three 3x3 convolutions with relu between them.
template <typename Scalar>
struct ConvStack {
  Conv3x3Params<Scalar> conv1;
  Conv3x3Params<Scalar> conv2;
  Conv3x3Params<Scalar> conv3;

  static ConvStack create(ParameterSet<Scalar>& set, const std::string& prefix, Index in,
                          Index hidden, Index out);
  Tensor<Scalar> operator()(const Tensor<Scalar>& x, Index grid) const;
};

template <typename Scalar>
struct HeadParams {
  ConvStack<Scalar> score;
  ConvStack<Scalar> offset;
  ConvStack<Scalar> size;

  static HeadParams create(ParameterSet<Scalar>& set, const std::string& prefix,
                           const ModelConfig& cfg);
};

template <typename Scalar>
struct HeadOutput {
  Tensor<Scalar> score;   // [G x G], sigmoid
  Tensor<Scalar> offset;  // [G^2 x 2], (x, y) sub-cell offsets
  Tensor<Scalar> size;    // [G^2 x 2], (w, h) as fractions of the search side
  Index peak = 0;         // flat index of the selected cell
  BBox bbox;              // decoded, clipped to the search frame, in pixels
  Tensor<Scalar> box;     // [1 x 4] differentiable (x, y, w, h) / search side at the peak
};

/// Flat index of the largest entry; ties go to the lowest index.
template <typename Scalar>
Index argmax_lowest(const Buffer<Scalar>& values);

/// Box for `peak` from raw head maps, clipped to [0, search_size]^2.
template <typename Scalar>
BBox decode_box(Index peak, const Buffer<Scalar>& offset, const Buffer<Scalar>& size,
                const ModelConfig& cfg);

/// Runs the head on G^2 x D search features. `forced_peak` pins the cell
/// used for the regression outputs instead of the score argmax.
template <typename Scalar>
HeadOutput<Scalar> head_forward(const Tensor<Scalar>& search_feats, const HeadParams<Scalar>& p,
                                const ModelConfig& cfg,
                                std::optional<Index> forced_peak = std::nullopt);

}  // namespace rtkd
