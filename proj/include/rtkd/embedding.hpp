#pragma once

#include <string>
#include <vector>

#include "rtkd/config.hpp"
#include "rtkd/image.hpp"
#include "rtkd/layers.hpp"

namespace rtkd {

enum class Modality { kRgb, kTir };
enum class Role { kTemplate, kSearch };

const char* modality_name(Modality m);

/// Contiguous run of tokens from one image.
struct Segment {
  Role role;
  Modality modality;
  Index start;
  Index length;
  Index rows;
  Index cols;

  bool operator==(const Segment&) const = default;
};

template <typename Scalar>
struct TokenSeq {
  Tensor<Scalar> tokens;  // [N x D]
  std::vector<Segment> segments;

  Index size() const { return tokens.dim(0); }
};

/// Patch tokens [H W / P^2 x P^2 C]: patches row-major, pixels row-major
/// inside a patch, channels innermost.
template <typename Scalar>
Tensor<Scalar> patchify(const ImagePlane& image, Index patch);

/// Inverse of patchify.
template <typename Scalar>
ImagePlane unpatchify(const Tensor<Scalar>& tokens, Index height, Index width, Index channels,
                      Index patch);

template <typename Scalar>
struct EmbeddingParams {
  LinearParams<Scalar> patch;    // P^2 C -> D
  Tensor<Scalar> pos_template;   // [N_z x D]
  Tensor<Scalar> pos_search;     // [N_x x D]
  Tensor<Scalar> modality_rgb;   // [1 x D]
  Tensor<Scalar> modality_tir;   // [1 x D]

  static EmbeddingParams create(ParameterSet<Scalar>& set, const std::string& prefix,
                                const ModelConfig& cfg);
  const Tensor<Scalar>& modality(Modality m) const {
    return m == Modality::kRgb ? modality_rgb : modality_tir;
  }
};

/// Projects the template and search patches of one modality, adds the
/// position and modality embeddings, and stacks template before search.
template <typename Scalar>
TokenSeq<Scalar> embed_pair(const ImagePlane& z, const ImagePlane& x, Modality modality,
                            const EmbeddingParams<Scalar>& params, const ModelConfig& cfg);

}  // namespace rtkd
