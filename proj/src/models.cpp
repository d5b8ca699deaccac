#include "rtkd/models.hpp"

#include "rtkd/errors.hpp"

namespace rtkd {

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kTeacher:
      return "teacher";
    case ModelKind::kStudent:
      return "student";
    case ModelKind::kFost:
      return "fost";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "teacher") return ModelKind::kTeacher;
  if (name == "student") return ModelKind::kStudent;
  if (name == "fost") return ModelKind::kFost;
  throw UsageError("unknown model kind '" + name + "' (expected teacher, student or fost)");
}

std::string parameter_prefix(ModelKind kind) {
  return kind == ModelKind::kTeacher ? "teacher" : "student";
}

namespace {

template <typename Scalar>
HeadOutput<Scalar> fuse_and_decode(const Tensor<Scalar>& rgb_search, const Tensor<Scalar>& tir_search,
                                   const LinearParams<Scalar>& dr, const HeadParams<Scalar>& head,
                                   const ModelConfig& cfg, const ForwardOptions& options) {
  return head_forward(dr(concat<Scalar>({rgb_search, tir_search}, 1)), head, cfg,
                      options.forced_peak);
}

template <typename Scalar>
std::vector<EncoderLayerParams<Scalar>> create_layers(ParameterSet<Scalar>& set,
                                                      const std::string& prefix,
                                                      const ModelConfig& cfg) {
  std::vector<EncoderLayerParams<Scalar>> layers;
  for (Index l = 1; l <= cfg.layers; ++l) {
    layers.push_back(
        EncoderLayerParams<Scalar>::create(set, prefix + "/layer" + std::to_string(l), cfg));
  }
  return layers;
}

}  // namespace

template <typename Scalar>
TeacherModel<Scalar>::TeacherModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::string prefix = "teacher";
  embed = EmbeddingParams<Scalar>::create(params_, prefix + "/embed", cfg_);
  layers = create_layers(params_, prefix, cfg_);
  final_norm = NormParams<Scalar>::create(params_, prefix + "/final_norm", cfg_.dim);
  dr = LinearParams<Scalar>::create(params_, prefix + "/dr", 2 * cfg_.dim, cfg_.dim);
  head = HeadParams<Scalar>::create(params_, prefix + "/head", cfg_);
  for (Index l = 0; l <= cfg_.layers; ++l) {
    const std::string layer = prefix + "/layer" + std::to_string(l);
    mmmp_rgb.push_back(MmmpParams<Scalar>::create(params_, layer + "/mmmp_rgb", cfg_));
    mmmp_tir.push_back(MmmpParams<Scalar>::create(params_, layer + "/mmmp_tir", cfg_));
  }
  Rng rng(seed);
  initialize_parameters(params_, rng);
  // The unit g_t bias only exists to pass gradient through a zero spatial
  // stage; without that stage a zero bias keeps the prompts zero at start.
  if (!cfg_.prompter.spatial) {
    for (auto& m : mmmp_rgb) m.g_t_bias.mutable_values().setZero();
    for (auto& m : mmmp_tir) m.g_t_bias.mutable_values().setZero();
  }
}

template <typename Scalar>
TeacherOutput<Scalar> TeacherModel<Scalar>::forward(const SampleImages& images,
                                                    const ForwardOptions& options) const {
  const PrompterOptions& po = cfg_.prompter;
  const double lambda = cfg_.fovea_lambda;
  Tensor<Scalar> h_rgb = embed_pair(images.template_rgb, images.search_rgb, Modality::kRgb, embed, cfg_).tokens;
  Tensor<Scalar> h_tir = embed_pair(images.template_tir, images.search_tir, Modality::kTir, embed, cfg_).tokens;

  TeacherOutput<Scalar> out;
  Tensor<Scalar> p_rgb;
  Tensor<Scalar> p_tir;
  if (po.enabled) {
    p_rgb = mmmp_forward<Scalar>(h_rgb, h_tir, nullptr, mmmp_rgb[0], po, lambda);
    p_tir = mmmp_forward<Scalar>(h_tir, h_rgb, nullptr, mmmp_tir[0], po, lambda);
    out.prompts.push_back({p_rgb, p_tir});
  }
  for (Index l = 1; l <= cfg_.layers; ++l) {
    const auto& layer = layers[static_cast<std::size_t>(l - 1)];
    const bool last = l == cfg_.layers && options.capture_attention;
    Tensor<Scalar> in_rgb = h_rgb;
    Tensor<Scalar> in_tir = h_tir;
    if (po.enabled) {
      const auto li = static_cast<std::size_t>(l);
      Tensor<Scalar> next_rgb = mmmp_forward<Scalar>(h_rgb, h_tir, &p_rgb, mmmp_rgb[li], po, lambda);
      Tensor<Scalar> next_tir = mmmp_forward<Scalar>(h_tir, h_rgb, &p_tir, mmmp_tir[li], po, lambda);
      p_rgb = next_rgb;
      p_tir = next_tir;
      out.prompts.push_back({p_rgb, p_tir});
      in_rgb = add(h_rgb, p_rgb);
      in_tir = add(h_tir, p_tir);
    }
    h_rgb = encoder_layer(in_rgb, layer, cfg_.heads, last ? &out.attention_rgb : nullptr);
    h_tir = encoder_layer(in_tir, layer, cfg_.heads, last ? &out.attention_tir : nullptr);
    out.features.push_back({h_rgb, h_tir});
  }
  const Index nz = cfg_.template_tokens();
  const Index nx = cfg_.search_tokens();
  out.head = fuse_and_decode(slice(final_norm(h_rgb), 0, nz, nx), slice(final_norm(h_tir), 0, nz, nx),
                             dr, head, cfg_, options);
  return out;
}

template <typename Scalar>
StudentModel<Scalar>::StudentModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::string prefix = "student";
  embed = EmbeddingParams<Scalar>::create(params_, prefix + "/embed", cfg_);
  layers = create_layers(params_, prefix, cfg_);
  final_norm = NormParams<Scalar>::create(params_, prefix + "/final_norm", cfg_.dim);
  dr = LinearParams<Scalar>::create(params_, prefix + "/dr", 2 * cfg_.dim, cfg_.dim);
  head = HeadParams<Scalar>::create(params_, prefix + "/head", cfg_);
  Rng rng(seed);
  initialize_parameters(params_, rng);
}

template <typename Scalar>
StudentOutput<Scalar> StudentModel<Scalar>::forward(const SampleImages& images,
                                                    const ForwardOptions& options) const {
  const TokenSeq<Scalar> rgb = embed_pair(images.template_rgb, images.search_rgb, Modality::kRgb, embed, cfg_);
  const TokenSeq<Scalar> tir = embed_pair(images.template_tir, images.search_tir, Modality::kTir, embed, cfg_);
  Tensor<Scalar> h = concat<Scalar>({rgb.tokens, tir.tokens}, 0);

  StudentOutput<Scalar> out;
  for (Index l = 1; l <= cfg_.layers; ++l) {
    const bool last = l == cfg_.layers && options.capture_attention;
    h = encoder_layer(h, layers[static_cast<std::size_t>(l - 1)], cfg_.heads,
                      last ? &out.attention : nullptr);
    out.features.push_back(h);
  }
  const Index n = cfg_.tokens();
  const Index nz = cfg_.template_tokens();
  const Index nx = cfg_.search_tokens();
  const Tensor<Scalar> normed = final_norm(h);
  out.head = fuse_and_decode(slice(normed, 0, nz, nx), slice(normed, 0, n + nz, nx), dr, head,
                             cfg_, options);
  return out;
}

template <typename Scalar>
StudentOutput<Scalar> fost_forward(const StudentModel<Scalar>& model, const SampleImages& images,
                                   const ForwardOptions& options) {
  return model.forward(images, options);
}

template <typename Scalar>
HeadOutput<Scalar> decoupled_reference_forward(const TeacherModel<Scalar>& model,
                                               const SampleImages& images) {
  const ModelConfig& cfg = model.config();
  auto stream = [&](const ImagePlane& z, const ImagePlane& x, Modality m) {
    Tensor<Scalar> h = embed_pair(z, x, m, model.embed, cfg).tokens;
    for (const auto& layer : model.layers) h = encoder_layer(h, layer, cfg.heads);
    return slice(model.final_norm(h), 0, cfg.template_tokens(), cfg.search_tokens());
  };
  const Tensor<Scalar> rgb = stream(images.template_rgb, images.search_rgb, Modality::kRgb);
  const Tensor<Scalar> tir = stream(images.template_tir, images.search_tir, Modality::kTir);
  return fuse_and_decode(rgb, tir, model.dr, model.head, cfg, ForwardOptions{});
}

#define RTKD_INSTANTIATE_MODELS(S)                                                             \
  template class TeacherModel<S>;                                                              \
  template class StudentModel<S>;                                                              \
  template StudentOutput<S> fost_forward(const StudentModel<S>&, const SampleImages&,          \
                                         const ForwardOptions&);                               \
  template HeadOutput<S> decoupled_reference_forward(const TeacherModel<S>&, const SampleImages&);

RTKD_INSTANTIATE_MODELS(float)
RTKD_INSTANTIATE_MODELS(double)

}  // namespace rtkd
