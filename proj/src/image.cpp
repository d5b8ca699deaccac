#include "rtkd/image.hpp"

#include "rtkd/errors.hpp"

namespace rtkd {

ImagePlane::ImagePlane(Index h, Index w, Index c, float fill)
    : height(h), width(w), channels(c), values(static_cast<std::size_t>(h * w * c), fill) {
  if (h <= 0 || w <= 0 || c <= 0) {
    throw DomainError("image extents must be positive, got " + std::to_string(h) + "x" +
                      std::to_string(w) + "x" + std::to_string(c));
  }
}

ImagePlane replicate_channels(const ImagePlane& gray, Index channels) {
  if (gray.channels != 1) {
    throw DimensionError("replicate_channels expects 1 channel, got " +
                         std::to_string(gray.channels));
  }
  ImagePlane out(gray.height, gray.width, channels);
  for (Index y = 0; y < gray.height; ++y) {
    for (Index x = 0; x < gray.width; ++x) {
      for (Index c = 0; c < channels; ++c) out.at(y, x, c) = gray.at(y, x, 0);
    }
  }
  return out;
}

}  // namespace rtkd
