#include "rtkd/embedding.hpp"

#include "rtkd/errors.hpp"

namespace rtkd {

const char* modality_name(Modality m) { return m == Modality::kRgb ? "rgb" : "tir"; }

template <typename Scalar>
Tensor<Scalar> patchify(const ImagePlane& image, Index patch) {
  if (patch <= 0 || image.height % patch != 0 || image.width % patch != 0) {
    throw DomainError("patchify: image " + std::to_string(image.height) + "x" +
                      std::to_string(image.width) + " not divisible by patch " +
                      std::to_string(patch));
  }
  const Index gy = image.height / patch;
  const Index gx = image.width / patch;
  const Index c = image.channels;
  const Index width = patch * patch * c;
  Buffer<Scalar> out(gy * gx * width);
  Index k = 0;
  for (Index py = 0; py < gy; ++py) {
    for (Index px = 0; px < gx; ++px) {
      for (Index y = 0; y < patch; ++y) {
        for (Index x = 0; x < patch; ++x) {
          for (Index ch = 0; ch < c; ++ch) {
            out[k++] = static_cast<Scalar>(image.at(py * patch + y, px * patch + x, ch));
          }
        }
      }
    }
  }
  return Tensor<Scalar>(Shape{gy * gx, width}, std::move(out));
}

template <typename Scalar>
ImagePlane unpatchify(const Tensor<Scalar>& tokens, Index height, Index width, Index channels,
                      Index patch) {
  if (patch <= 0 || height % patch != 0 || width % patch != 0) {
    throw DomainError("unpatchify: extents not divisible by patch");
  }
  const Index gy = height / patch;
  const Index gx = width / patch;
  if (tokens.shape() != Shape{gy * gx, patch * patch * channels}) {
    throw DimensionError("unpatchify: tokens " + shape_string(tokens.shape()) +
                         " do not match image " + std::to_string(height) + "x" +
                         std::to_string(width) + "x" + std::to_string(channels));
  }
  ImagePlane image(height, width, channels);
  Index k = 0;
  for (Index py = 0; py < gy; ++py) {
    for (Index px = 0; px < gx; ++px) {
      for (Index y = 0; y < patch; ++y) {
        for (Index x = 0; x < patch; ++x) {
          for (Index ch = 0; ch < channels; ++ch) {
            image.at(py * patch + y, px * patch + x, ch) = static_cast<float>(tokens[k++]);
          }
        }
      }
    }
  }
  return image;
}

template <typename Scalar>
EmbeddingParams<Scalar> EmbeddingParams<Scalar>::create(ParameterSet<Scalar>& set,
                                                        const std::string& prefix,
                                                        const ModelConfig& cfg) {
  EmbeddingParams p;
  p.patch = LinearParams<Scalar>::create(set, prefix + "/patch", cfg.patch_dim(), cfg.dim);
  p.pos_template = set.add(prefix + "/pos_template", {cfg.template_tokens(), cfg.dim});
  p.pos_search = set.add(prefix + "/pos_search", {cfg.search_tokens(), cfg.dim});
  p.modality_rgb = set.add(prefix + "/modality_rgb", {1, cfg.dim});
  p.modality_tir = set.add(prefix + "/modality_tir", {1, cfg.dim});
  return p;
}

template <typename Scalar>
TokenSeq<Scalar> embed_pair(const ImagePlane& z, const ImagePlane& x, Modality modality,
                            const EmbeddingParams<Scalar>& params, const ModelConfig& cfg) {
  auto check = [&](const ImagePlane& img, Index size, const char* what) {
    if (img.height != size || img.width != size || img.channels != cfg.channels) {
      throw DimensionError(std::string("embed_pair: ") + what + " image is " +
                           std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
                           std::to_string(img.channels) + ", expected " + std::to_string(size) +
                           "x" + std::to_string(size) + "x" + std::to_string(cfg.channels));
    }
  };
  check(z, cfg.template_size, "template");
  check(x, cfg.search_size, "search");
  const Tensor<Scalar> zt = add(params.patch(patchify<Scalar>(z, cfg.patch)), params.pos_template);
  const Tensor<Scalar> xt = add(params.patch(patchify<Scalar>(x, cfg.patch)), params.pos_search);
  TokenSeq<Scalar> seq;
  seq.tokens = add(concat<Scalar>({zt, xt}, 0), params.modality(modality));
  const Index nz = cfg.template_tokens();
  seq.segments = {
      {Role::kTemplate, modality, 0, nz, cfg.template_grid(), cfg.template_grid()},
      {Role::kSearch, modality, nz, cfg.search_tokens(), cfg.search_grid(), cfg.search_grid()},
  };
  return seq;
}

#define RTKD_INSTANTIATE_EMBEDDING(S)                                                           \
  template Tensor<S> patchify<S>(const ImagePlane&, Index);                                     \
  template ImagePlane unpatchify(const Tensor<S>&, Index, Index, Index, Index);                \
  template struct EmbeddingParams<S>;                                                           \
  template TokenSeq<S> embed_pair(const ImagePlane&, const ImagePlane&, Modality,               \
                                  const EmbeddingParams<S>&, const ModelConfig&);

RTKD_INSTANTIATE_EMBEDDING(float)
RTKD_INSTANTIATE_EMBEDDING(double)

}  // namespace rtkd
