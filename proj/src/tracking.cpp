#include "rtkd/tracking.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

#include "rtkd/errors.hpp"

namespace rtkd {

BBox OracleTracker::track(const FrameRecord&, Index index) {
  if (index < 0 || index >= static_cast<Index>(boxes_.size())) {
    throw DomainError("oracle tracker has no box for frame " + std::to_string(index));
  }
  return boxes_[static_cast<std::size_t>(index)];
}

template <typename Model>
ModelTracker<Model>::ModelTracker(const Model& model)
    : model_(model), crop_(crop_config_for(model.config())) {}

template <typename Model>
void ModelTracker<Model>::initialize(const FrameRecord& frame, const BBox& box) {
  const CropWindow tw = crop_window(box, crop_.template_factor, crop_.template_size);
  template_rgb_ = crop_plane(frame.rgb, tw, crop_.channels);
  template_tir_ = crop_plane(frame.tir, tw, crop_.channels);
  last_ = box;
}

template <typename Model>
BBox ModelTracker<Model>::track(const FrameRecord& frame, Index) {
  const CropWindow sw = crop_window(last_, crop_.search_factor, crop_.search_size);
  const SampleImages images{template_rgb_, crop_plane(frame.rgb, sw, crop_.channels), template_tir_,
                            crop_plane(frame.tir, sw, crop_.channels)};
  const BBox local = model_.forward(images).head.bbox;
  BBox pred = sw.to_frame(local);
  // Keep the next anchor inside the frame and at least two pixels wide.
  const double width = static_cast<double>(frame.rgb.width);
  const double height = static_cast<double>(frame.rgb.height);
  const double w = std::clamp(pred.w, 2.0, width);
  const double h = std::clamp(pred.h, 2.0, height);
  const double cx = std::clamp(pred.cx(), 0.5 * w, width - 0.5 * w);
  const double cy = std::clamp(pred.cy(), 0.5 * h, height - 0.5 * h);
  pred = BBox::from_center(cx, cy, w, h);
  last_ = pred;
  return pred;
}

template <typename Scalar>
ScopedNoGrad<Scalar>::ScopedNoGrad(const ParameterSet<Scalar>& params) {
  for (const auto& p : params.entries()) {
    tensors_.push_back(p.tensor);
    flags_.push_back(p.tensor.requires_grad());
    tensors_.back().set_requires_grad(false);
  }
}

template <typename Scalar>
ScopedNoGrad<Scalar>::~ScopedNoGrad() {
  for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].set_requires_grad(flags_[i]);
}

TrackResult run_tracking(const Sequence& seq, Tracker& tracker) {
  const SequenceMeta& meta = seq.meta;
  if (seq.frames.empty()) throw DomainError("sequence " + meta.name + " has no frames");
  TrackResult r;
  r.name = meta.name;
  r.gt = meta.gt;
  r.attributes = meta.attributes;
  tracker.initialize(seq.frames[0], meta.gt[0]);
  r.pred.push_back(meta.gt[0]);
  for (std::size_t t = 1; t < seq.frames.size(); ++t) {
    r.pred.push_back(tracker.track(seq.frames[t], static_cast<Index>(t)));
  }
  return r;
}

unsigned worker_threads() {
  if (const char* env = std::getenv("RTKD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

template <typename MakeTracker>
std::vector<TrackResult> track_all(const std::vector<Sequence>& sequences, MakeTracker make) {
  std::vector<TrackResult> results(sequences.size());
  const unsigned threads = std::min<unsigned>(worker_threads(), static_cast<unsigned>(sequences.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      auto tracker = make(sequences[i]);
      results[i] = run_tracking(sequences[i], *tracker);
    }
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < sequences.size(); i = next++) {
          auto tracker = make(sequences[i]);
          results[i] = run_tracking(sequences[i], *tracker);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace

template <typename Model>
std::vector<TrackResult> track_sequences(const Model& model, const std::vector<Sequence>& sequences) {
  ScopedNoGrad<float> frozen(model.parameters());
  return track_all(sequences, [&](const Sequence&) { return std::make_unique<ModelTracker<Model>>(model); });
}

std::vector<TrackResult> track_sequences_oracle(const std::vector<Sequence>& sequences) {
  return track_all(sequences, [](const Sequence& s) { return std::make_unique<OracleTracker>(s.meta.gt); });
}

template class ModelTracker<TeacherModel<float>>;
template class ModelTracker<StudentModel<float>>;
template class ScopedNoGrad<float>;
template class ScopedNoGrad<double>;
template std::vector<TrackResult> track_sequences(const TeacherModel<float>&, const std::vector<Sequence>&);
template std::vector<TrackResult> track_sequences(const StudentModel<float>&, const std::vector<Sequence>&);

}  // namespace rtkd
