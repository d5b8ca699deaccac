#pragma once

#include <filesystem>

#include "rtkd/config.hpp"
#include "rtkd/models.hpp"
#include "rtkd/parameters.hpp"

namespace rtkd {

/// A checkpoint directory holds `manifest.json` (one entry per parameter:
/// name, shape, dtype "f32", byte_offset, byte_len), `weights.bin` with the
/// little-endian float32 values in manifest order, and `model.cfg` naming
/// the model kind and architecture.
struct CheckpointInfo {
  ModelKind kind = ModelKind::kTeacher;
  ModelConfig model;
};

void save_checkpoint(const std::filesystem::path& dir, ModelKind kind, const ModelConfig& model,
                     const ParameterSet<float>& params);

CheckpointInfo read_checkpoint_info(const std::filesystem::path& dir);

/// Overwrites `params` from the checkpoint. Any mismatch in names, order,
/// shapes, offsets or file length raises FormatError.
void load_parameters(const std::filesystem::path& dir, ParameterSet<float>& params);

/// Student and fost checkpoints load interchangeably; a teacher checkpoint
/// in either raises FormatError.
TeacherModel<float> load_teacher(const std::filesystem::path& dir);
StudentModel<float> load_student(const std::filesystem::path& dir);

}  // namespace rtkd
