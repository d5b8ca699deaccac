#include "rtkd/head.hpp"

#include <algorithm>

namespace rtkd {

template <typename Scalar>
ConvStack<Scalar> ConvStack<Scalar>::create(ParameterSet<Scalar>& set, const std::string& prefix,
                                            Index in, Index hidden, Index out) {
  return {Conv3x3Params<Scalar>::create(set, prefix + "/conv1", in, hidden),
          Conv3x3Params<Scalar>::create(set, prefix + "/conv2", hidden, hidden),
          Conv3x3Params<Scalar>::create(set, prefix + "/conv3", hidden, out)};
}

template <typename Scalar>
Tensor<Scalar> ConvStack<Scalar>::operator()(const Tensor<Scalar>& x, Index grid) const {
  const Tensor<Scalar> h1 = relu(conv1(x, grid, grid));
  const Tensor<Scalar> h2 = relu(conv2(h1, grid, grid));
  return conv3(h2, grid, grid);
}

template <typename Scalar>
HeadParams<Scalar> HeadParams<Scalar>::create(ParameterSet<Scalar>& set, const std::string& prefix,
                                              const ModelConfig& cfg) {
  return {ConvStack<Scalar>::create(set, prefix + "/score", cfg.dim, cfg.head_channels, 1),
          ConvStack<Scalar>::create(set, prefix + "/offset", cfg.dim, cfg.head_channels, 2),
          ConvStack<Scalar>::create(set, prefix + "/size", cfg.dim, cfg.head_channels, 2)};
}

template <typename Scalar>
Index argmax_lowest(const Buffer<Scalar>& values) {
  Index best = 0;
  for (Index i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

template <typename Scalar>
BBox decode_box(Index peak, const Buffer<Scalar>& offset, const Buffer<Scalar>& size,
                const ModelConfig& cfg) {
  const Index g = cfg.search_grid();
  const double side = static_cast<double>(cfg.search_size);
  const double i = static_cast<double>(peak / g);
  const double j = static_cast<double>(peak % g);
  const double cx = (j + static_cast<double>(offset[2 * peak])) * static_cast<double>(cfg.patch);
  const double cy = (i + static_cast<double>(offset[2 * peak + 1])) * static_cast<double>(cfg.patch);
  const double w = static_cast<double>(size[2 * peak]) * side;
  const double h = static_cast<double>(size[2 * peak + 1]) * side;
  const double x0 = std::clamp(cx - 0.5 * w, 0.0, side);
  const double y0 = std::clamp(cy - 0.5 * h, 0.0, side);
  const double x1 = std::clamp(cx + 0.5 * w, 0.0, side);
  const double y1 = std::clamp(cy + 0.5 * h, 0.0, side);
  return {x0, y0, x1 - x0, y1 - y0};
}

template <typename Scalar>
HeadOutput<Scalar> head_forward(const Tensor<Scalar>& search_feats, const HeadParams<Scalar>& p,
                                const ModelConfig& cfg, std::optional<Index> forced_peak) {
  const Index g = cfg.search_grid();
  if (search_feats.shape() != Shape{g * g, cfg.dim}) {
    throw DimensionError("head_forward: expected " + shape_string({g * g, cfg.dim}) +
                         " search features, got " + shape_string(search_feats.shape()));
  }
  HeadOutput<Scalar> out;
  out.score = reshape(sigmoid(p.score(search_feats, g)), Shape{g, g});
  out.offset = sigmoid(p.offset(search_feats, g));
  out.size = sigmoid(p.size(search_feats, g));
  out.peak = forced_peak ? *forced_peak : argmax_lowest(out.score.values());
  if (out.peak < 0 || out.peak >= g * g) {
    throw DomainError("head_forward: peak " + std::to_string(out.peak) + " outside the grid");
  }
  out.bbox = decode_box(out.peak, out.offset.values(), out.size.values(), cfg);

  const Tensor<Scalar> cell = Tensor<Scalar>::from_values(
      {1, 2}, {static_cast<Scalar>(out.peak % g), static_cast<Scalar>(out.peak / g)});
  const Tensor<Scalar> wh = slice(out.size, 0, out.peak, 1);
  const Tensor<Scalar> centre =
      scale(add(slice(out.offset, 0, out.peak, 1), cell), static_cast<Scalar>(1.0 / double(g)));
  out.box = concat<Scalar>({sub(centre, scale(wh, Scalar(0.5))), wh}, 1);
  return out;
}

#define RTKD_INSTANTIATE_HEAD(S)                                                                 \
  template struct ConvStack<S>;                                                                  \
  template struct HeadParams<S>;                                                                 \
  template Index argmax_lowest(const Buffer<S>&);                                                \
  template BBox decode_box(Index, const Buffer<S>&, const Buffer<S>&, const ModelConfig&);       \
  template HeadOutput<S> head_forward(const Tensor<S>&, const HeadParams<S>&, const ModelConfig&, \
                                      std::optional<Index>);

RTKD_INSTANTIATE_HEAD(float)
RTKD_INSTANTIATE_HEAD(double)

}  // namespace rtkd
