#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rtkd/embedding.hpp"
#include "rtkd/encoder.hpp"
#include "rtkd/head.hpp"
#include "rtkd/prompter.hpp"

namespace rtkd {

/// Template and search crops of both modalities, all with cfg.channels
/// channels (thermal planes are replicated before they get here).
struct SampleImages {
  ImagePlane template_rgb;
  ImagePlane search_rgb;
  ImagePlane template_tir;
  ImagePlane search_tir;
};

struct ForwardOptions {
  std::optional<Index> forced_peak;
  /// Keep head-averaged attention weights of the last encoder layer.
  bool capture_attention = false;
};

template <typename Scalar>
struct LayerPair {
  Tensor<Scalar> rgb;
  Tensor<Scalar> tir;
};

template <typename Scalar>
struct TeacherOutput {
  HeadOutput<Scalar> head;
  std::vector<LayerPair<Scalar>> features;  // encoder outputs, layers 1..L
  std::vector<LayerPair<Scalar>> prompts;   // prompter outputs, 0..L (empty without prompters)
  RowMatrix<Scalar> attention_rgb;          // N x N
  RowMatrix<Scalar> attention_tir;
};

template <typename Scalar>
struct StudentOutput {
  HeadOutput<Scalar> head;
  std::vector<Tensor<Scalar>> features;  // 2N x D per layer, [Z_rgb | X_rgb | Z_tir | X_tir]
  RowMatrix<Scalar> attention;           // 2N x 2N
};

enum class ModelKind { kTeacher, kStudent, kFost };

const char* model_kind_name(ModelKind kind);
/// Accepts "teacher", "student" and "fost"; anything else is a UsageError.
ModelKind parse_model_kind(const std::string& name);
/// Name prefix of the parameters; student and fost share "student".
std::string parameter_prefix(ModelKind kind);

/// Two-stream tracker: one encoder stack shared by both modalities, with
/// separate mutual prompters per modality and depth.
template <typename Scalar>
class TeacherModel {
 public:
  TeacherModel(const ModelConfig& cfg, std::uint64_t seed);
  TeacherModel(const TeacherModel&) = delete;
  TeacherModel& operator=(const TeacherModel&) = delete;
  TeacherModel(TeacherModel&&) = default;
  TeacherModel& operator=(TeacherModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  void set_prompter_options(const PrompterOptions& options) { cfg_.prompter = options; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }

  TeacherOutput<Scalar> forward(const SampleImages& images, const ForwardOptions& options = {}) const;

  EmbeddingParams<Scalar> embed;
  std::vector<EncoderLayerParams<Scalar>> layers;
  NormParams<Scalar> final_norm;
  std::vector<MmmpParams<Scalar>> mmmp_rgb;  // L + 1, index 0 runs before layer 1
  std::vector<MmmpParams<Scalar>> mmmp_tir;
  LinearParams<Scalar> dr;  // 2D -> D
  HeadParams<Scalar> head;

 private:
  ModelConfig cfg_;
  ParameterSet<Scalar> params_;
};

/// One-stream tracker over the concatenated tokens of both modalities. Also
/// serves as the FOST control model.
template <typename Scalar>
class StudentModel {
 public:
  StudentModel(const ModelConfig& cfg, std::uint64_t seed);
  StudentModel(const StudentModel&) = delete;
  StudentModel& operator=(const StudentModel&) = delete;
  StudentModel(StudentModel&&) = default;
  StudentModel& operator=(StudentModel&&) = default;

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }

  StudentOutput<Scalar> forward(const SampleImages& images, const ForwardOptions& options = {}) const;

  EmbeddingParams<Scalar> embed;
  std::vector<EncoderLayerParams<Scalar>> layers;
  NormParams<Scalar> final_norm;
  LinearParams<Scalar> dr;
  HeadParams<Scalar> head;

 private:
  ModelConfig cfg_;
  ParameterSet<Scalar> params_;
};

/// The student architecture trained without distillation.
template <typename Scalar>
StudentOutput<Scalar> fost_forward(const StudentModel<Scalar>& model, const SampleImages& images,
                                   const ForwardOptions& options = {});

/// Teacher evaluated as two independent single-modality backbones followed
/// by the shared fusion and head, ignoring every prompter.
template <typename Scalar>
HeadOutput<Scalar> decoupled_reference_forward(const TeacherModel<Scalar>& model,
                                               const SampleImages& images);

}  // namespace rtkd
