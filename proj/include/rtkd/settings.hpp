#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rtkd/config.hpp"
#include "rtkd/trainer.hpp"

namespace rtkd {

/// Model and training settings of one run, read from a key = value file.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;

  bool operator==(const RunConfig&) const = default;
};

/// Model keys: search_size template_size patch dim layers heads mlp_ratio
/// head_channels reduction fovea_lambda prompter spatial_attn token_attn
/// history. Unknown keys raise ValidationError.
void apply_model_settings(ModelConfig& cfg, std::map<std::string, std::string>& values);

/// Training keys: every TrainConfig field, loss weights as lambda_*.
void apply_train_settings(TrainConfig& cfg, std::map<std::string, std::string>& values);

/// Defaults of `loop` overridden by `values`; leftovers are unknown keys.
RunConfig run_config_from(LoopKind loop, std::map<std::string, std::string> values,
                          const std::string& source);

/// Reads and validates a config file. An empty path yields the defaults.
RunConfig load_run_config(LoopKind loop, const std::filesystem::path& path);

std::vector<std::pair<std::string, std::string>> model_settings(const ModelConfig& cfg);
std::vector<std::pair<std::string, std::string>> train_settings(const TrainConfig& cfg);

/// Every key with its value, readable back by load_run_config.
std::string format_run_config(const RunConfig& cfg);

}  // namespace rtkd
