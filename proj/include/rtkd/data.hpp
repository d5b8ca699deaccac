#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rtkd/image.hpp"
#include "rtkd/models.hpp"

namespace rtkd {

enum class ScenarioKind {
  kRgbDominant,
  kTirDominant,
  kSwitching,
  kOcclusion,
  kDeformation,
  kThermalCrossover,
};

const char* scenario_name(ScenarioKind kind);
/// UsageError listing the valid kinds on an unknown name.
ScenarioKind parse_scenario(const std::string& name);
const std::vector<ScenarioKind>& all_scenarios();

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kSwitching;
  std::string name = "seq";
  Index frames = 64;
  Index height = 64;
  Index width = 64;
  double noise = 0.02;
  std::uint64_t seed = 0;
};

struct SequenceMeta {
  std::string name;
  Index num_frames = 0;
  Index width = 0;
  Index height = 0;
  std::vector<std::string> attributes;
  std::vector<BBox> gt;  // full-frame pixels
  std::vector<double> visibility_rgb;
  std::vector<double> visibility_tir;

  bool operator==(const SequenceMeta&) const = default;
};

struct FrameRecord {
  ImagePlane rgb;  // 3 channels
  ImagePlane tir;  // 1 channel

  bool operator==(const FrameRecord&) const = default;
};

struct Sequence {
  SequenceMeta meta;
  std::vector<FrameRecord> frames;
};

/// Renders a moving superellipse target over a low-frequency background in
/// both modalities, with per-frame contrast set by the visibility schedule.
/// Fully determined by the spec.
Sequence generate_sequence(const ScenarioSpec& spec);

/// Pixel-centre test against the target shape used by the renderer.
bool inside_target(const BBox& box, double px, double py);

/// Square crop window: `side` source pixels at (x0, y0), resampled to `out`.
struct CropWindow {
  double x0 = 0.0;
  double y0 = 0.0;
  double side = 0.0;
  Index out = 0;

  double scale() const { return static_cast<double>(out) / side; }
  BBox to_crop(const BBox& b) const;
  BBox to_frame(const BBox& b) const;
};

/// Window of side factor * sqrt(w h) centred on `anchor`.
CropWindow crop_window(const BBox& anchor, double factor, Index out);

/// Bilinear resampling of `window`; samples outside the frame read the
/// per-channel frame mean. Single-channel input is replicated to
/// `channels` channels.
ImagePlane crop_plane(const ImagePlane& frame, const CropWindow& window, Index channels);

struct CropConfig {
  Index template_size = 16;
  Index search_size = 32;
  double template_factor = 2.0;
  double search_factor = 4.0;
  Index channels = 3;
};

struct CropResult {
  ImagePlane template_rgb;
  ImagePlane template_tir;
  ImagePlane search_rgb;
  ImagePlane search_tir;
  CropWindow template_window;
  CropWindow search_window;
  BBox gt_in_search;
};

/// Crops template and search regions around `anchor` in both modalities and
/// maps `gt` into search coordinates.
CropResult crop_regions(const FrameRecord& frame, const BBox& anchor, const BBox& gt,
                        const CropConfig& cfg);

/// Template from `template_frame` at `template_box`, search from
/// `search_frame` around `anchor`.
SampleImages make_sample(const FrameRecord& template_frame, const BBox& template_box,
                         const FrameRecord& search_frame, const BBox& anchor, const CropConfig& cfg,
                         CropWindow* search_window = nullptr);

CropConfig crop_config_for(const ModelConfig& cfg);

// On-disk layout: meta.json plus NNNNNN.rgb.rtf / NNNNNN.tir.rtf per frame.
// RTF is "RTF0", u32 width, u32 height, u32 channels, then f32 values, all
// little-endian.
void write_rtf(const std::filesystem::path& path, const ImagePlane& image);
ImagePlane read_rtf(const std::filesystem::path& path);

std::string meta_to_json(const SequenceMeta& meta);
SequenceMeta meta_from_json(const std::string& text, const std::string& source);

void write_sequence(const std::filesystem::path& dir, const Sequence& seq);
Sequence read_sequence(const std::filesystem::path& dir);

/// Sequence directories (those holding meta.json) under `root`, sorted.
std::vector<std::filesystem::path> list_sequences(const std::filesystem::path& root);
std::vector<Sequence> read_dataset(const std::filesystem::path& root);

}  // namespace rtkd
