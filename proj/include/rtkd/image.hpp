#pragma once

#include <vector>

#include "rtkd/tensor.hpp"

namespace rtkd {

/// Row-major, channel-interleaved f32 image with values in [0, 1].
struct ImagePlane {
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  std::vector<float> values;

  ImagePlane() = default;
  ImagePlane(Index h, Index w, Index c, float fill = 0.0f);

  float& at(Index y, Index x, Index c) {
    return values[static_cast<std::size_t>((y * width + x) * channels + c)];
  }
  float at(Index y, Index x, Index c) const {
    return values[static_cast<std::size_t>((y * width + x) * channels + c)];
  }

  bool operator==(const ImagePlane&) const = default;
};

/// Copies a single-channel plane into `channels` identical channels.
ImagePlane replicate_channels(const ImagePlane& gray, Index channels);

/// Axis-aligned box: top-left corner plus extent, in pixels.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double area() const { return w * h; }

  static BBox from_center(double cx, double cy, double w, double h) {
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }

  bool operator==(const BBox&) const = default;
};

}  // namespace rtkd
