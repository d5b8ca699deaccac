#include "rtkd/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <numbers>

#include <json.hpp>

#include "rtkd/errors.hpp"
#include "rtkd/io.hpp"
#include "rtkd/rng.hpp"

namespace rtkd {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "RTF I/O assumes a little-endian host");

const char* scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::kRgbDominant:
      return "rgb_dominant";
    case ScenarioKind::kTirDominant:
      return "tir_dominant";
    case ScenarioKind::kSwitching:
      return "switching";
    case ScenarioKind::kOcclusion:
      return "occlusion";
    case ScenarioKind::kDeformation:
      return "deformation";
    case ScenarioKind::kThermalCrossover:
      return "thermal_crossover";
  }
  return "unknown";
}

const std::vector<ScenarioKind>& all_scenarios() {
  static const std::vector<ScenarioKind> kinds = {
      ScenarioKind::kRgbDominant, ScenarioKind::kTirDominant, ScenarioKind::kSwitching,
      ScenarioKind::kOcclusion,   ScenarioKind::kDeformation, ScenarioKind::kThermalCrossover};
  return kinds;
}

ScenarioKind parse_scenario(const std::string& name) {
  std::string valid;
  for (ScenarioKind k : all_scenarios()) {
    if (name == scenario_name(k)) return k;
    valid += valid.empty() ? "" : ", ";
    valid += scenario_name(k);
  }
  throw UsageError("unknown scenario '" + name + "' (valid: " + valid + ")");
}

// --- generation ----------------------------------------------------------------

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Sum of a few random plane waves around a base level.
struct Background {
  struct Wave {
    double fx, fy, phase, amplitude;
  };
  double base = 0.4;
  std::vector<Wave> waves;

  static Background random(Rng& rng, double base) {
    Background bg;
    bg.base = base;
    for (int i = 0; i < 3; ++i) {
      bg.waves.push_back({rng.uniform(0.5, 2.5), rng.uniform(0.5, 2.5), rng.uniform(0.0, kTwoPi),
                          rng.uniform(0.03, 0.08)});
    }
    return bg;
  }

  double at(double u, double v) const {
    double s = base;
    for (const Wave& w : waves) s += w.amplitude * std::sin(kTwoPi * (w.fx * u + w.fy * v) + w.phase);
    return s;
  }
};

// Superellipse of order 4 inscribed in the box.
double shape_radius(const BBox& box, double px, double py) {
  const double a = 0.5 * box.w;
  const double b = 0.5 * box.h;
  const double dx = std::abs(px - box.cx()) / a;
  const double dy = std::abs(py - box.cy()) / b;
  return std::pow(std::pow(dx, 4) + std::pow(dy, 4), 0.25);
}

// Coverage in [0, 1] with a one-pixel soft rim; exactly 0.5 on the boundary.
double coverage(const BBox& box, double px, double py) {
  const double rho = shape_radius(box, px, py);
  const double rim = 0.5 * std::min(box.w, box.h);
  return std::clamp(0.5 - (rho - 1.0) * rim, 0.0, 1.0);
}

struct Schedule {
  std::vector<double> rgb;
  std::vector<double> tir;
};

Schedule visibility_schedule(const ScenarioSpec& spec, Rng& rng) {
  const Index n = spec.frames;
  Schedule s;
  s.rgb.resize(static_cast<std::size_t>(n));
  s.tir.resize(static_cast<std::size_t>(n));
  auto strong = [&] { return rng.uniform(0.8, 1.0); };
  auto weak = [&] { return rng.uniform(0.15, 0.35); };
  const Index quarter = std::max<Index>(1, n / 4);
  const Index occ_len = std::max<Index>(1, n / 8);
  const Index occ_start = n / 2 - occ_len / 2;
  for (Index t = 0; t < n; ++t) {
    const auto i = static_cast<std::size_t>(t);
    switch (spec.kind) {
      case ScenarioKind::kRgbDominant:
        s.rgb[i] = strong();
        s.tir[i] = weak();
        break;
      case ScenarioKind::kTirDominant:
        s.rgb[i] = weak();
        s.tir[i] = strong();
        break;
      case ScenarioKind::kSwitching:
        if ((t / quarter) % 2 == 0) {
          s.rgb[i] = strong();
          s.tir[i] = weak();
        } else {
          s.rgb[i] = weak();
          s.tir[i] = strong();
        }
        break;
      case ScenarioKind::kOcclusion: {
        const bool hidden = t >= occ_start && t < occ_start + occ_len;
        s.rgb[i] = hidden ? 0.0 : rng.uniform(0.7, 0.9);
        s.tir[i] = hidden ? 0.0 : rng.uniform(0.7, 0.9);
        break;
      }
      case ScenarioKind::kDeformation:
        s.rgb[i] = rng.uniform(0.6, 0.8);
        s.tir[i] = rng.uniform(0.6, 0.8);
        break;
      case ScenarioKind::kThermalCrossover: {
        // Thermal contrast fades out and back over the middle half.
        const double phase = std::clamp((double(t) - 0.25 * double(n)) / (0.5 * double(n)), 0.0, 1.0);
        s.rgb[i] = rng.uniform(0.6, 0.8);
        s.tir[i] = 0.1 + 0.7 * std::abs(2.0 * phase - 1.0);
        break;
      }
    }
  }
  return s;
}

// Smooth random walk with reflecting margins; returns per-frame boxes.
std::vector<BBox> trajectory(const ScenarioSpec& spec, Rng& rng) {
  const double base_w = rng.uniform(8.0, 13.0) * double(spec.width) / 64.0;
  const double base_h = rng.uniform(8.0, 13.0) * double(spec.height) / 64.0;
  const double wobble = spec.kind == ScenarioKind::kDeformation ? 0.35 : 0.08;
  const double period = rng.uniform(12.0, 24.0);
  const double margin = 0.75 * std::max(base_w, base_h) * (1.0 + wobble) + 1.0;
  double cx = rng.uniform(margin, double(spec.width) - margin);
  double cy = rng.uniform(margin, double(spec.height) - margin);
  double vx = rng.uniform(-1.0, 1.0);
  double vy = rng.uniform(-1.0, 1.0);
  std::vector<BBox> boxes;
  for (Index t = 0; t < spec.frames; ++t) {
    const double s = std::sin(kTwoPi * double(t) / period);
    const double w = base_w * (1.0 + wobble * s);
    const double h = base_h * (1.0 - wobble * s);
    boxes.push_back(BBox::from_center(cx, cy, w, h));
    vx = std::clamp(vx + 0.3 * rng.normal(), -2.0, 2.0);
    vy = std::clamp(vy + 0.3 * rng.normal(), -2.0, 2.0);
    cx += vx;
    cy += vy;
    if (cx < margin || cx > double(spec.width) - margin) {
      vx = -vx;
      cx = std::clamp(cx, margin, double(spec.width) - margin);
    }
    if (cy < margin || cy > double(spec.height) - margin) {
      vy = -vy;
      cy = std::clamp(cy, margin, double(spec.height) - margin);
    }
  }
  return boxes;
}

void validate_spec(const ScenarioSpec& spec) {
  if (spec.frames < 1) throw DomainError("scenario needs at least one frame");
  if (spec.width < 24 || spec.height < 24) {
    throw DomainError("scenario frames must be at least 24x24, got " + std::to_string(spec.width) +
                      "x" + std::to_string(spec.height));
  }
  if (!(spec.noise >= 0.0)) throw DomainError("noise level must be non-negative");
}

}  // namespace

bool inside_target(const BBox& box, double px, double py) {
  return shape_radius(box, px, py) <= 1.0;
}

Sequence generate_sequence(const ScenarioSpec& spec) {
  validate_spec(spec);
  Rng rng(spec.seed);
  Rng vis_rng = rng.fork(1);
  Rng path_rng = rng.fork(2);
  Rng decoy_rng = rng.fork(3);
  Rng scene_rng = rng.fork(4);
  Rng noise_rng = rng.fork(5);

  const Schedule vis = visibility_schedule(spec, vis_rng);
  const std::vector<BBox> boxes = trajectory(spec, path_rng);
  // A decoy follows its own path and shows up in whichever modality is weak.
  ScenarioSpec decoy_spec = spec;
  decoy_spec.kind = ScenarioKind::kRgbDominant;
  const std::vector<BBox> decoys = trajectory(decoy_spec, decoy_rng);

  std::array<Background, 3> rgb_bg;
  std::array<double, 3> colour{};
  for (int c = 0; c < 3; ++c) {
    rgb_bg[static_cast<std::size_t>(c)] = Background::random(scene_rng, scene_rng.uniform(0.3, 0.5));
  }
  // Saturated target colour: one bright channel, the others dark.
  const auto bright = static_cast<std::size_t>(scene_rng.below(3));
  for (std::size_t c = 0; c < 3; ++c) colour[c] = c == bright ? 0.95 : scene_rng.uniform(0.05, 0.2);
  const Background tir_bg = Background::random(scene_rng, scene_rng.uniform(0.25, 0.4));
  const double heat = 0.95;

  Sequence seq;
  SequenceMeta& meta = seq.meta;
  meta.name = spec.name;
  meta.num_frames = spec.frames;
  meta.width = spec.width;
  meta.height = spec.height;
  meta.attributes = {scenario_name(spec.kind)};
  meta.gt = boxes;
  meta.visibility_rgb = vis.rgb;
  meta.visibility_tir = vis.tir;

  for (Index t = 0; t < spec.frames; ++t) {
    const auto i = static_cast<std::size_t>(t);
    const double vr = vis.rgb[i];
    const double vt = vis.tir[i];
    if (spec.kind != ScenarioKind::kOcclusion && std::max(vr, vt) < 0.5) {
      throw DomainError("frame " + std::to_string(t) + " has no modality with visibility >= 0.5");
    }
    FrameRecord frame{ImagePlane(spec.height, spec.width, 3), ImagePlane(spec.height, spec.width, 1)};
    for (Index y = 0; y < spec.height; ++y) {
      for (Index x = 0; x < spec.width; ++x) {
        const double px = double(x) + 0.5;
        const double py = double(y) + 0.5;
        const double u = px / double(spec.width);
        const double v = py / double(spec.height);
        const double m = coverage(boxes[i], px, py);
        const double d = coverage(decoys[i], px, py);
        for (Index c = 0; c < 3; ++c) {
          const auto ci = static_cast<std::size_t>(c);
          double s = rgb_bg[ci].at(u, v);
          s += 0.8 * (1.0 - vr) * d * (colour[ci] - s);
          s += vr * m * (colour[ci] - s);
          s += spec.noise * noise_rng.normal();
          frame.rgb.at(y, x, c) = static_cast<float>(std::clamp(s, 0.0, 1.0));
        }
        double s = tir_bg.at(u, v);
        s += 0.8 * (1.0 - vt) * d * (heat - s);
        s += vt * m * (heat - s);
        s += spec.noise * noise_rng.normal();
        frame.tir.at(y, x, 0) = static_cast<float>(std::clamp(s, 0.0, 1.0));
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

// --- cropping -------------------------------------------------------------------

BBox CropWindow::to_crop(const BBox& b) const {
  const double s = scale();
  return {(b.x - x0) * s, (b.y - y0) * s, b.w * s, b.h * s};
}

BBox CropWindow::to_frame(const BBox& b) const {
  const double s = 1.0 / scale();
  return {x0 + b.x * s, y0 + b.y * s, b.w * s, b.h * s};
}

CropWindow crop_window(const BBox& anchor, double factor, Index out) {
  if (!(anchor.w > 0.0) || !(anchor.h > 0.0)) {
    throw DomainError("crop anchor has non-positive extent " + std::to_string(anchor.w) + "x" +
                      std::to_string(anchor.h));
  }
  const double side = factor * std::sqrt(anchor.w * anchor.h);
  return {anchor.cx() - 0.5 * side, anchor.cy() - 0.5 * side, side, out};
}

ImagePlane crop_plane(const ImagePlane& frame, const CropWindow& window, Index channels) {
  const Index src_c = frame.channels;
  if (src_c != channels && src_c != 1) {
    throw DimensionError("crop_plane: cannot map " + std::to_string(src_c) + " channels to " +
                         std::to_string(channels));
  }
  std::vector<double> fill(static_cast<std::size_t>(src_c), 0.0);
  for (std::size_t k = 0; k < frame.values.size(); ++k) fill[k % std::size_t(src_c)] += frame.values[k];
  for (double& f : fill) f /= double(frame.height * frame.width);

  auto sample = [&](Index y, Index x, Index c) -> double {
    if (y < 0 || x < 0 || y >= frame.height || x >= frame.width) return fill[static_cast<std::size_t>(c)];
    return frame.at(y, x, c);
  };
  ImagePlane out(window.out, window.out, channels);
  const double step = window.side / double(window.out);
  for (Index v = 0; v < window.out; ++v) {
    const double sy = window.y0 + (double(v) + 0.5) * step - 0.5;
    const double fy = std::floor(sy);
    const double ty = sy - fy;
    const auto y0 = static_cast<Index>(fy);
    for (Index u = 0; u < window.out; ++u) {
      const double sx = window.x0 + (double(u) + 0.5) * step - 0.5;
      const double fx = std::floor(sx);
      const double tx = sx - fx;
      const auto x0 = static_cast<Index>(fx);
      for (Index c = 0; c < src_c; ++c) {
        const double top = (1.0 - tx) * sample(y0, x0, c) + tx * sample(y0, x0 + 1, c);
        const double bottom = (1.0 - tx) * sample(y0 + 1, x0, c) + tx * sample(y0 + 1, x0 + 1, c);
        const auto value = static_cast<float>((1.0 - ty) * top + ty * bottom);
        if (src_c == channels) {
          out.at(v, u, c) = value;
        } else {
          for (Index k = 0; k < channels; ++k) out.at(v, u, k) = value;
        }
      }
    }
  }
  return out;
}

CropResult crop_regions(const FrameRecord& frame, const BBox& anchor, const BBox& gt,
                        const CropConfig& cfg) {
  CropResult r;
  r.template_window = crop_window(anchor, cfg.template_factor, cfg.template_size);
  r.search_window = crop_window(anchor, cfg.search_factor, cfg.search_size);
  r.template_rgb = crop_plane(frame.rgb, r.template_window, cfg.channels);
  r.template_tir = crop_plane(frame.tir, r.template_window, cfg.channels);
  r.search_rgb = crop_plane(frame.rgb, r.search_window, cfg.channels);
  r.search_tir = crop_plane(frame.tir, r.search_window, cfg.channels);
  r.gt_in_search = r.search_window.to_crop(gt);
  return r;
}

SampleImages make_sample(const FrameRecord& template_frame, const BBox& template_box,
                         const FrameRecord& search_frame, const BBox& anchor, const CropConfig& cfg,
                         CropWindow* search_window) {
  const CropWindow tw = crop_window(template_box, cfg.template_factor, cfg.template_size);
  const CropWindow sw = crop_window(anchor, cfg.search_factor, cfg.search_size);
  if (search_window) *search_window = sw;
  return {crop_plane(template_frame.rgb, tw, cfg.channels), crop_plane(search_frame.rgb, sw, cfg.channels),
          crop_plane(template_frame.tir, tw, cfg.channels), crop_plane(search_frame.tir, sw, cfg.channels)};
}

CropConfig crop_config_for(const ModelConfig& cfg) {
  CropConfig c;
  c.template_size = cfg.template_size;
  c.search_size = cfg.search_size;
  c.channels = cfg.channels;
  return c;
}

// --- storage --------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'R', 'T', 'F', '0'};

void append_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::uint32_t read_u32(const std::string& bytes, std::size_t offset) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + offset, 4);
  return v;
}

std::string frame_stem(Index t) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(t));
  return buf;
}

}  // namespace

void write_rtf(const fs::path& path, const ImagePlane& image) {
  std::string bytes(kMagic, 4);
  append_u32(bytes, static_cast<std::uint32_t>(image.width));
  append_u32(bytes, static_cast<std::uint32_t>(image.height));
  append_u32(bytes, static_cast<std::uint32_t>(image.channels));
  bytes.append(reinterpret_cast<const char*>(image.values.data()), image.values.size() * sizeof(float));
  write_file_atomic(path, bytes);
}

ImagePlane read_rtf(const fs::path& path) {
  const std::string bytes = read_file(path);
  const std::string where = path.string();
  if (bytes.size() < 4) throw FormatError(where + ": truncated at offset " + std::to_string(bytes.size()) + " (missing magic)");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(where + ": bad magic at offset 0");
  if (bytes.size() < 16) throw FormatError(where + ": truncated header at offset " + std::to_string(bytes.size()));
  const std::uint32_t w = read_u32(bytes, 4);
  const std::uint32_t h = read_u32(bytes, 8);
  const std::uint32_t c = read_u32(bytes, 12);
  if (w == 0 || h == 0 || c == 0) throw FormatError(where + ": zero extent in header at offset 4");
  const std::uint64_t expected = 16 + std::uint64_t(w) * h * c * sizeof(float);
  if (bytes.size() < expected) {
    throw FormatError(where + ": truncated at offset " + std::to_string(bytes.size()) + ", expected " +
                      std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw FormatError(where + ": " + std::to_string(bytes.size() - expected) +
                      " trailing bytes at offset " + std::to_string(expected));
  }
  ImagePlane image(h, w, c);
  std::memcpy(image.values.data(), bytes.data() + 16, image.values.size() * sizeof(float));
  return image;
}

std::string meta_to_json(const SequenceMeta& meta) {
  nlohmann::ordered_json j;
  j["name"] = meta.name;
  j["num_frames"] = meta.num_frames;
  j["width"] = meta.width;
  j["height"] = meta.height;
  j["attributes"] = meta.attributes;
  nlohmann::ordered_json gt = nlohmann::ordered_json::array();
  for (const BBox& b : meta.gt) gt.push_back({b.x, b.y, b.w, b.h});
  j["gt"] = gt;
  j["visibility"] = {{"rgb", meta.visibility_rgb}, {"tir", meta.visibility_tir}};
  return j.dump(1) + "\n";
}

SequenceMeta meta_from_json(const std::string& text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(source + ": invalid JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  static const std::vector<std::string> keys = {"name",       "num_frames", "width",     "height",
                                                "attributes", "gt",         "visibility"};
  if (!j.is_object()) throw FormatError(source + ": top level is not an object");
  for (const auto& k : keys) {
    if (!j.contains(k)) throw FormatError(source + ": missing key '" + k + "'");
  }
  for (const auto& item : j.items()) {
    if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
      throw FormatError(source + ": unexpected key '" + item.key() + "'");
    }
  }
  SequenceMeta meta;
  try {
    meta.name = j.at("name").get<std::string>();
    meta.num_frames = j.at("num_frames").get<Index>();
    meta.width = j.at("width").get<Index>();
    meta.height = j.at("height").get<Index>();
    meta.attributes = j.at("attributes").get<std::vector<std::string>>();
    for (const auto& b : j.at("gt")) {
      if (!b.is_array() || b.size() != 4) throw FormatError(source + ": gt entries must be [x, y, w, h]");
      meta.gt.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()});
    }
    const auto& vis = j.at("visibility");
    if (!vis.is_object() || vis.size() != 2 || !vis.contains("rgb") || !vis.contains("tir")) {
      throw FormatError(source + ": visibility must hold exactly 'rgb' and 'tir'");
    }
    meta.visibility_rgb = vis.at("rgb").get<std::vector<double>>();
    meta.visibility_tir = vis.at("tir").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": " + e.what());
  }
  const auto n = static_cast<std::size_t>(meta.num_frames);
  if (meta.num_frames < 1 || meta.gt.size() != n || meta.visibility_rgb.size() != n ||
      meta.visibility_tir.size() != n) {
    throw FormatError(source + ": num_frames " + std::to_string(meta.num_frames) +
                      " disagrees with gt/visibility lengths");
  }
  return meta;
}

void write_sequence(const fs::path& dir, const Sequence& seq) {
  if (seq.frames.size() != static_cast<std::size_t>(seq.meta.num_frames)) {
    throw ValidationError("sequence " + seq.meta.name + " has " + std::to_string(seq.frames.size()) +
                          " frames but meta says " + std::to_string(seq.meta.num_frames));
  }
  fs::create_directories(dir);
  for (Index t = 0; t < seq.meta.num_frames; ++t) {
    const auto& f = seq.frames[static_cast<std::size_t>(t)];
    write_rtf(dir / (frame_stem(t) + ".rgb.rtf"), f.rgb);
    write_rtf(dir / (frame_stem(t) + ".tir.rtf"), f.tir);
  }
  write_file_atomic(dir / "meta.json", meta_to_json(seq.meta));
}

Sequence read_sequence(const fs::path& dir) {
  Sequence seq;
  const fs::path meta_path = dir / "meta.json";
  seq.meta = meta_from_json(read_text_record(meta_path), meta_path.string());
  Index on_disk = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".rtf") ++on_disk;
  }
  if (on_disk != 2 * seq.meta.num_frames) {
    throw FormatError(meta_path.string() + ": num_frames " + std::to_string(seq.meta.num_frames) +
                      " but " + std::to_string(on_disk) + " frame files present");
  }
  for (Index t = 0; t < seq.meta.num_frames; ++t) {
    const fs::path rgb_path = dir / (frame_stem(t) + ".rgb.rtf");
    const fs::path tir_path = dir / (frame_stem(t) + ".tir.rtf");
    FrameRecord f{read_rtf(rgb_path), read_rtf(tir_path)};
    auto check = [&](const ImagePlane& img, Index channels, const fs::path& p) {
      if (img.width != seq.meta.width || img.height != seq.meta.height || img.channels != channels) {
        throw FormatError(p.string() + ": shape " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + "x" + std::to_string(img.channels) +
                          " disagrees with meta at offset 4");
      }
    };
    check(f.rgb, 3, rgb_path);
    check(f.tir, 1, tir_path);
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

std::vector<fs::path> list_sequences(const fs::path& root) {
  if (!fs::is_directory(root)) throw FormatError("data directory " + root.string() + " not found");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Sequence> read_dataset(const fs::path& root) {
  std::vector<Sequence> out;
  for (const auto& dir : list_sequences(root)) out.push_back(read_sequence(dir));
  if (out.empty()) throw FormatError("no sequences under " + root.string());
  return out;
}

}  // namespace rtkd
