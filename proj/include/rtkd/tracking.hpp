#pragma once

#include <vector>

#include "rtkd/data.hpp"
#include "rtkd/eval.hpp"
#include "rtkd/models.hpp"

namespace rtkd {

/// Frame-by-frame single-object tracker.
class Tracker {
 public:
  virtual ~Tracker() = default;
  virtual void initialize(const FrameRecord& frame, const BBox& box) = 0;
  virtual BBox track(const FrameRecord& frame, Index index) = 0;
};

/// Replays known boxes; a diagnostic upper bound for the metrics.
class OracleTracker final : public Tracker {
 public:
  explicit OracleTracker(std::vector<BBox> boxes) : boxes_(std::move(boxes)) {}
  void initialize(const FrameRecord&, const BBox&) override {}
  BBox track(const FrameRecord&, Index index) override;

 private:
  std::vector<BBox> boxes_;
};

/// Template from the first frame, search region around the previous
/// prediction. Works with TeacherModel<float> and StudentModel<float>.
template <typename Model>
class ModelTracker final : public Tracker {
 public:
  explicit ModelTracker(const Model& model);
  void initialize(const FrameRecord& frame, const BBox& box) override;
  BBox track(const FrameRecord& frame, Index index) override;

 private:
  const Model& model_;
  CropConfig crop_;
  ImagePlane template_rgb_;
  ImagePlane template_tir_;
  BBox last_;
};

/// Turns gradient recording off for a parameter set and restores it on exit.
template <typename Scalar>
class ScopedNoGrad {
 public:
  explicit ScopedNoGrad(const ParameterSet<Scalar>& params);
  ~ScopedNoGrad();
  ScopedNoGrad(const ScopedNoGrad&) = delete;
  ScopedNoGrad& operator=(const ScopedNoGrad&) = delete;

 private:
  std::vector<Tensor<Scalar>> tensors_;
  std::vector<bool> flags_;
};

/// Initializes on frame 0 with its ground truth and tracks the rest.
TrackResult run_tracking(const Sequence& seq, Tracker& tracker);

/// Tracks every sequence with a frozen model, spreading sequences over
/// worker_threads() threads. Output order follows `sequences`.
template <typename Model>
std::vector<TrackResult> track_sequences(const Model& model, const std::vector<Sequence>& sequences);

std::vector<TrackResult> track_sequences_oracle(const std::vector<Sequence>& sequences);

/// RTKD_THREADS if set and positive, else the hardware concurrency.
unsigned worker_threads();

}  // namespace rtkd
