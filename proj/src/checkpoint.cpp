#include "rtkd/checkpoint.hpp"

#include <bit>
#include <json.hpp>

#include "rtkd/errors.hpp"
#include "rtkd/io.hpp"
#include "rtkd/keyvalue.hpp"
#include "rtkd/settings.hpp"

namespace rtkd {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kWeights = "weights.bin";
constexpr const char* kModelCfg = "model.cfg";

void put_f32(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32(const std::string& in, std::size_t at) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= std::uint32_t(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

[[noreturn]] void bad(const fs::path& file, const std::string& what) {
  throw FormatError(file.string() + ": " + what);
}

}  // namespace

void save_checkpoint(const fs::path& dir, ModelKind kind, const ModelConfig& model,
                     const ParameterSet<float>& params) {
  ordered_json manifest = ordered_json::array();
  std::string weights;
  weights.reserve(static_cast<std::size_t>(params.total_elements()) * 4);
  for (const auto& p : params.entries()) {
    const std::size_t offset = weights.size();
    const Buffer<float>& v = p.tensor.values();
    for (Index i = 0; i < v.size(); ++i) put_f32(weights, v[i]);
    ordered_json entry;
    entry["name"] = p.name;
    entry["shape"] = p.tensor.shape();
    entry["dtype"] = "f32";
    entry["byte_offset"] = offset;
    entry["byte_len"] = weights.size() - offset;
    manifest.push_back(std::move(entry));
  }
  auto cfg = model_settings(model);
  cfg.insert(cfg.begin(), {"kind", model_kind_name(kind)});
  write_file_atomic(dir / kWeights, weights);
  write_file_atomic(dir / kManifest, manifest.dump(2) + "\n");
  write_file_atomic(dir / kModelCfg, format_key_values(cfg));
}

CheckpointInfo read_checkpoint_info(const fs::path& dir) {
  const fs::path file = dir / kModelCfg;
  auto values = parse_key_values(read_text_record(file), file.string());
  CheckpointInfo info;
  const auto kind = values.find("kind");
  if (kind == values.end()) bad(file, "missing 'kind'");
  try {
    info.kind = parse_model_kind(kind->second);
    values.erase(kind);
    apply_model_settings(info.model, values);
    if (!values.empty()) bad(file, "unknown key '" + values.begin()->first + "'");
    info.model.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    bad(file, e.what());
  }
  return info;
}

void load_parameters(const fs::path& dir, ParameterSet<float>& params) {
  const fs::path manifest_file = dir / kManifest;
  const fs::path weights_file = dir / kWeights;
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(read_text_record(manifest_file));
  } catch (const ordered_json::exception& e) {
    bad(manifest_file, std::string("invalid JSON: ") + e.what());
  }
  const std::string weights = read_file(weights_file);
  if (!manifest.is_array()) bad(manifest_file, "expected an array");
  if (manifest.size() != params.size()) {
    bad(manifest_file, std::to_string(manifest.size()) + " entries, model has " + std::to_string(params.size()));
  }
  std::size_t expected_offset = 0;
  std::vector<Buffer<float>> loaded;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const auto& entry = manifest[i];
    const auto& p = params.entries()[i];
    try {
      if (entry.size() != 5) bad(manifest_file, "entry " + std::to_string(i) + " must have 5 keys");
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto dtype = entry.at("dtype").get<std::string>();
      const auto offset = entry.at("byte_offset").get<std::size_t>();
      const auto len = entry.at("byte_len").get<std::size_t>();
      if (name != p.name) bad(manifest_file, "entry " + std::to_string(i) + " is '" + name + "', expected '" + p.name + "'");
      if (dtype != "f32") bad(manifest_file, name + ": unsupported dtype '" + dtype + "'");
      if (shape != p.tensor.shape()) {
        bad(manifest_file, name + ": shape " + shape_string(shape) + ", expected " + shape_string(p.tensor.shape()));
      }
      if (len != static_cast<std::size_t>(shape_numel(shape)) * 4) {
        bad(manifest_file, name + ": byte_len " + std::to_string(len) + " does not match shape");
      }
      if (offset != expected_offset) bad(manifest_file, name + ": byte_offset " + std::to_string(offset) + " out of sequence");
      if (offset + len > weights.size()) {
        bad(weights_file, "truncated at offset " + std::to_string(weights.size()) + " while reading " + name);
      }
      Buffer<float> v(shape_numel(shape));
      for (Index k = 0; k < v.size(); ++k) v[k] = get_f32(weights, offset + 4 * static_cast<std::size_t>(k));
      loaded.push_back(std::move(v));
      expected_offset = offset + len;
    } catch (const ordered_json::exception& e) {
      bad(manifest_file, "entry " + std::to_string(i) + ": " + e.what());
    }
  }
  if (expected_offset != weights.size()) {
    bad(weights_file, std::to_string(weights.size() - expected_offset) + " trailing bytes at offset " +
                          std::to_string(expected_offset));
  }
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    Tensor<float> t = params.entries()[i].tensor;
    t.mutable_values() = std::move(loaded[i]);
  }
}

TeacherModel<float> load_teacher(const fs::path& dir) {
  const CheckpointInfo info = read_checkpoint_info(dir);
  if (info.kind != ModelKind::kTeacher) {
    bad(dir / kModelCfg, std::string("holds a ") + model_kind_name(info.kind) + " model, expected teacher");
  }
  TeacherModel<float> model(info.model, 0);
  load_parameters(dir, model.parameters());
  return model;
}

StudentModel<float> load_student(const fs::path& dir) {
  const CheckpointInfo info = read_checkpoint_info(dir);
  if (info.kind == ModelKind::kTeacher) bad(dir / kModelCfg, "holds a teacher model, expected student or fost");
  StudentModel<float> model(info.model, 0);
  load_parameters(dir, model.parameters());
  return model;
}

}  // namespace rtkd
