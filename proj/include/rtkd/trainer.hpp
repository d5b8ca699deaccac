#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rtkd/data.hpp"
#include "rtkd/losses.hpp"
#include "rtkd/models.hpp"
#include "rtkd/parameters.hpp"

namespace rtkd {

enum class LoopKind { kTeacher, kDistill, kFost };

const char* loop_name(LoopKind loop);

struct TrainConfig {
  double lr_backbone = 7.5e-5;
  double lr_other = 7.5e-4;
  double weight_decay = 1e-4;
  Index decay_epoch = 10;
  double decay_factor = 0.1;
  Index epochs = 15;
  Index batch_size = 8;
  Index samples_per_epoch = 2000;
  std::uint64_t seed = 0;
  LossWeights weights;
  FeatureKdOptions feature;
  // Pair sampling: template and search frames at most this far apart,
  // search centre shifted by up to center_jitter * sqrt(w h) / 2 and its
  // scale by exp(+-scale_jitter).
  Index max_frame_gap = 8;
  double center_jitter = 1.5;
  double scale_jitter = 0.15;

  /// Epochs 15 / 13 / 15 for teacher / distill / fost; fost also zeroes
  /// the distillation weights.
  static TrainConfig defaults_for(LoopKind loop);

  /// ValidationError on bad values; fost rejects non-zero distillation
  /// weights.
  void validate(LoopKind loop) const;

  /// Base rate of the group, multiplied by decay_factor once `epoch`
  /// (1-based) passes decay_epoch.
  double learning_rate(ParamGroup group, Index epoch) const;

  bool operator==(const TrainConfig&) const = default;
};

struct AdamState {
  std::vector<Buffer<double>> m;
  std::vector<Buffer<double>> v;
  Index step = 0;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One AdamW update from the gradients held by `params`: decoupled decay
/// theta -= lr * wd * theta first, then the bias-corrected moment step.
/// `lr` holds one rate per parameter. Parameters without a gradient only
/// decay.
template <typename Scalar>
void adamw_step(ParameterSet<Scalar>& params, AdamState& state, const std::vector<double>& lr,
                double weight_decay);

struct TraceRow {
  Index step = 0;
  Index epoch = 0;
  double giou = 0.0;
  double l1 = 0.0;
  double focal = 0.0;
  double rm = 0.0;
  double mf = 0.0;
  double total = 0.0;
};

/// step,giou,l1,focal[,rm,mf],total; the distillation columns only for the
/// distill loop.
std::string trace_to_csv(const std::vector<TraceRow>& rows, LoopKind loop);

struct TrainingSample {
  SampleImages images;
  BBox gt_in_search;
};

/// Draws (template frame, jittered search frame) pairs from a corpus.
class PairSampler {
 public:
  PairSampler(const std::vector<Sequence>& data, const ModelConfig& model, const TrainConfig& cfg,
              std::uint64_t seed);
  TrainingSample next();

 private:
  const std::vector<Sequence>& data_;
  CropConfig crop_;
  TrainConfig cfg_;
  Rng rng_;
};

/// Called after each finished epoch (1-based).
using EpochHook = std::function<void(Index epoch)>;

std::vector<TraceRow> train_teacher(TeacherModel<float>& model, const std::vector<Sequence>& data,
                                    const TrainConfig& cfg, const EpochHook& hook = {});

/// The teacher stays frozen: no gradient reaches its parameters.
std::vector<TraceRow> distill_student(StudentModel<float>& student, const TeacherModel<float>& teacher,
                                      const std::vector<Sequence>& data, const TrainConfig& cfg,
                                      const EpochHook& hook = {});

std::vector<TraceRow> train_fost(StudentModel<float>& model, const std::vector<Sequence>& data,
                                 const TrainConfig& cfg, const EpochHook& hook = {});

}  // namespace rtkd
