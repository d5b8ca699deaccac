#pragma once

// Shared inputs for model-level tests.

#include "rtkd/config.hpp"
#include "rtkd/image.hpp"
#include "rtkd/models.hpp"
#include "rtkd/rng.hpp"

namespace rtkd::testing {

inline ImagePlane random_image(Index h, Index w, Index c, Rng& rng) {
  ImagePlane img(h, w, c);
  for (float& v : img.values) v = static_cast<float>(rng.uniform());
  return img;
}

inline SampleImages random_sample(const ModelConfig& cfg, Rng& rng) {
  SampleImages s;
  s.template_rgb = random_image(cfg.template_size, cfg.template_size, cfg.channels, rng);
  s.search_rgb = random_image(cfg.search_size, cfg.search_size, cfg.channels, rng);
  s.template_tir = random_image(cfg.template_size, cfg.template_size, cfg.channels, rng);
  s.search_tir = random_image(cfg.search_size, cfg.search_size, cfg.channels, rng);
  return s;
}

/// Scaled-down architecture for double-precision gradient replays.
inline ModelConfig small_config() {
  ModelConfig cfg;
  cfg.search_size = 16;
  cfg.template_size = 8;
  cfg.patch = 4;
  cfg.dim = 8;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.mlp_ratio = 2;
  cfg.head_channels = 4;
  return cfg;
}

/// Replaces every parameter with N(0, sigma^2) draws so that no block is
/// trivially zero.
template <typename Set>
void randomize(Set& params, Rng& rng, double sigma = 0.3) {
  for (const auto& p : params.entries()) {
    auto t = p.tensor;
    for (Index i = 0; i < t.numel(); ++i) t.mutable_values()[i] = sigma * rng.normal();
  }
}

}  // namespace rtkd::testing
