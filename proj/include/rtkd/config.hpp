#pragma once

#include <cstdint>
#include <string>

#include "rtkd/tensor.hpp"

namespace rtkd {

/// Which parts of each mutual prompter are active. Disabled attention stages
/// become identity pass-throughs; `enabled = false` drops the prompters.
struct PrompterOptions {
  bool enabled = true;
  bool spatial = true;
  bool token = true;
  bool history = true;

  bool operator==(const PrompterOptions&) const = default;
};

/// Architecture hyperparameters shared by teacher and student.
struct ModelConfig {
  Index search_size = 32;
  Index template_size = 16;
  Index patch = 4;
  Index channels = 3;
  Index dim = 32;
  Index layers = 4;
  Index heads = 4;
  Index mlp_ratio = 4;
  Index head_channels = 16;
  Index reduction = 4;
  double fovea_lambda = 1.0;
  PrompterOptions prompter;

  Index search_grid() const { return search_size / patch; }
  Index template_grid() const { return template_size / patch; }
  Index search_tokens() const { return search_grid() * search_grid(); }
  Index template_tokens() const { return template_grid() * template_grid(); }
  /// Tokens per modality: template followed by search.
  Index tokens() const { return template_tokens() + search_tokens(); }
  Index patch_dim() const { return patch * patch * channels; }
  /// Bottleneck width of the spatial-attention projection, ceil(N / r).
  Index prompter_hidden() const { return (tokens() + reduction - 1) / reduction; }

  /// Throws DomainError on inconsistent settings.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace rtkd
