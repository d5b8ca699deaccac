#include "rtkd/settings.hpp"

#include <functional>

#include "rtkd/errors.hpp"
#include "rtkd/io.hpp"
#include "rtkd/keyvalue.hpp"

namespace rtkd {

namespace {

using Values = std::map<std::string, std::string>;

// Removes `key` from `values` and hands its text to `apply` when present.
void take(Values& values, const std::string& key, const std::function<void(const std::string&)>& apply) {
  const auto it = values.find(key);
  if (it == values.end()) return;
  const std::string text = it->second;
  values.erase(it);
  apply(text);
}

void take_index(Values& values, const std::string& key, Index& out) {
  take(values, key, [&](const std::string& v) { out = static_cast<Index>(parse_integer(key, v)); });
}

void take_real(Values& values, const std::string& key, double& out) {
  take(values, key, [&](const std::string& v) { out = parse_real(key, v); });
}

void take_flag(Values& values, const std::string& key, bool& out) {
  take(values, key, [&](const std::string& v) { out = parse_flag(key, v); });
}

std::string flag(bool b) { return b ? "true" : "false"; }

}  // namespace

void apply_model_settings(ModelConfig& cfg, Values& values) {
  take_index(values, "search_size", cfg.search_size);
  take_index(values, "template_size", cfg.template_size);
  take_index(values, "patch", cfg.patch);
  take_index(values, "dim", cfg.dim);
  take_index(values, "layers", cfg.layers);
  take_index(values, "heads", cfg.heads);
  take_index(values, "mlp_ratio", cfg.mlp_ratio);
  take_index(values, "head_channels", cfg.head_channels);
  take_index(values, "reduction", cfg.reduction);
  take_real(values, "fovea_lambda", cfg.fovea_lambda);
  take_flag(values, "prompter", cfg.prompter.enabled);
  take_flag(values, "spatial_attn", cfg.prompter.spatial);
  take_flag(values, "token_attn", cfg.prompter.token);
  take_flag(values, "history", cfg.prompter.history);
}

void apply_train_settings(TrainConfig& cfg, Values& values) {
  take_real(values, "lr_backbone", cfg.lr_backbone);
  take_real(values, "lr_other", cfg.lr_other);
  take_real(values, "weight_decay", cfg.weight_decay);
  take_index(values, "decay_epoch", cfg.decay_epoch);
  take_real(values, "decay_factor", cfg.decay_factor);
  take_index(values, "epochs", cfg.epochs);
  take_index(values, "batch_size", cfg.batch_size);
  take_index(values, "samples_per_epoch", cfg.samples_per_epoch);
  take(values, "seed", [&](const std::string& v) {
    const long long s = parse_integer("seed", v);
    if (s < 0) throw ValidationError("seed must be non-negative, got " + v);
    cfg.seed = static_cast<std::uint64_t>(s);
  });
  take_real(values, "lambda_giou", cfg.weights.giou);
  take_real(values, "lambda_l1", cfg.weights.l1);
  take_real(values, "lambda_rm", cfg.weights.rm);
  take_real(values, "lambda_mf", cfg.weights.mf);
  take_real(values, "tau", cfg.weights.tau);
  take(values, "feature_layers", [&](const std::string& v) { cfg.feature.layers = parse_feature_layers(v); });
  take(values, "feature_weighting",
       [&](const std::string& v) { cfg.feature.weighting = parse_feature_weighting(v); });
  take_index(values, "max_frame_gap", cfg.max_frame_gap);
  take_real(values, "center_jitter", cfg.center_jitter);
  take_real(values, "scale_jitter", cfg.scale_jitter);
}

RunConfig run_config_from(LoopKind loop, Values values, const std::string& source) {
  RunConfig cfg;
  cfg.train = TrainConfig::defaults_for(loop);
  apply_model_settings(cfg.model, values);
  apply_train_settings(cfg.train, values);
  if (!values.empty()) {
    std::string keys;
    for (const auto& [k, v] : values) keys += (keys.empty() ? "" : ", ") + k;
    throw ValidationError(source + ": unknown keys: " + keys);
  }
  cfg.model.validate();
  return cfg;
}

RunConfig load_run_config(LoopKind loop, const std::filesystem::path& path) {
  if (path.empty()) return run_config_from(loop, {}, "defaults");
  return run_config_from(loop, parse_key_values(read_file(path), path.string()), path.string());
}

std::vector<std::pair<std::string, std::string>> model_settings(const ModelConfig& cfg) {
  return {
      {"search_size", std::to_string(cfg.search_size)},
      {"template_size", std::to_string(cfg.template_size)},
      {"patch", std::to_string(cfg.patch)},
      {"dim", std::to_string(cfg.dim)},
      {"layers", std::to_string(cfg.layers)},
      {"heads", std::to_string(cfg.heads)},
      {"mlp_ratio", std::to_string(cfg.mlp_ratio)},
      {"head_channels", std::to_string(cfg.head_channels)},
      {"reduction", std::to_string(cfg.reduction)},
      {"fovea_lambda", format_real(cfg.fovea_lambda)},
      {"prompter", flag(cfg.prompter.enabled)},
      {"spatial_attn", flag(cfg.prompter.spatial)},
      {"token_attn", flag(cfg.prompter.token)},
      {"history", flag(cfg.prompter.history)},
  };
}

std::vector<std::pair<std::string, std::string>> train_settings(const TrainConfig& cfg) {
  return {
      {"lr_backbone", format_real(cfg.lr_backbone)},
      {"lr_other", format_real(cfg.lr_other)},
      {"weight_decay", format_real(cfg.weight_decay)},
      {"decay_epoch", std::to_string(cfg.decay_epoch)},
      {"decay_factor", format_real(cfg.decay_factor)},
      {"epochs", std::to_string(cfg.epochs)},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"samples_per_epoch", std::to_string(cfg.samples_per_epoch)},
      {"seed", std::to_string(cfg.seed)},
      {"lambda_giou", format_real(cfg.weights.giou)},
      {"lambda_l1", format_real(cfg.weights.l1)},
      {"lambda_rm", format_real(cfg.weights.rm)},
      {"lambda_mf", format_real(cfg.weights.mf)},
      {"tau", format_real(cfg.weights.tau)},
      {"feature_layers", feature_layers_name(cfg.feature.layers)},
      {"feature_weighting", feature_weighting_name(cfg.feature.weighting)},
      {"max_frame_gap", std::to_string(cfg.max_frame_gap)},
      {"center_jitter", format_real(cfg.center_jitter)},
      {"scale_jitter", format_real(cfg.scale_jitter)},
  };
}

std::string format_run_config(const RunConfig& cfg) {
  auto entries = model_settings(cfg.model);
  for (auto& e : train_settings(cfg.train)) entries.push_back(std::move(e));
  return format_key_values(entries);
}

}  // namespace rtkd
