#include "rtkd/trainer.hpp"

#include <cmath>
#include <sstream>

#include "rtkd/errors.hpp"
#include "rtkd/keyvalue.hpp"
#include "rtkd/tracking.hpp"

namespace rtkd {

const char* loop_name(LoopKind loop) {
  switch (loop) {
    case LoopKind::kTeacher:
      return "teacher";
    case LoopKind::kDistill:
      return "distill";
    case LoopKind::kFost:
      return "fost";
  }
  return "unknown";
}

TrainConfig TrainConfig::defaults_for(LoopKind loop) {
  TrainConfig c;
  c.epochs = loop == LoopKind::kDistill ? 13 : 15;
  if (loop == LoopKind::kFost) {
    c.weights.rm = 0.0;
    c.weights.mf = 0.0;
  }
  return c;
}

void TrainConfig::validate(LoopKind loop) const {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string(what) + " must be positive, got " + format_real(v));
    }
  };
  positive(lr_backbone, "lr_backbone");
  positive(lr_other, "lr_other");
  positive(decay_factor, "decay_factor");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
  if (epochs < 1) throw ValidationError("epochs must be at least 1");
  if (decay_epoch < 1 || decay_epoch >= epochs) {
    throw ValidationError("decay_epoch " + std::to_string(decay_epoch) + " must lie in [1, epochs = " +
                          std::to_string(epochs) + ")");
  }
  if (batch_size < 1) throw ValidationError("batch_size must be at least 1");
  if (samples_per_epoch < batch_size) throw ValidationError("samples_per_epoch must be at least batch_size");
  if (max_frame_gap < 0) throw ValidationError("max_frame_gap must be non-negative");
  if (!(center_jitter >= 0.0) || !(scale_jitter >= 0.0)) throw ValidationError("jitter must be non-negative");
  try {
    weights.validate();
  } catch (const DomainError& e) {
    throw ValidationError(e.what());
  }
  if (loop == LoopKind::kFost && (weights.rm != 0.0 || weights.mf != 0.0)) {
    throw ValidationError("fost training takes no distillation terms: lambda_rm = " +
                          format_real(weights.rm) + ", lambda_mf = " + format_real(weights.mf));
  }
}

double TrainConfig::learning_rate(ParamGroup group, Index epoch) const {
  const double base = group == ParamGroup::kBackbone ? lr_backbone : lr_other;
  return epoch > decay_epoch ? base * decay_factor : base;
}

template <typename Scalar>
void adamw_step(ParameterSet<Scalar>& params, AdamState& state, const std::vector<double>& lr,
                double weight_decay) {
  const auto& entries = params.entries();
  if (lr.size() != entries.size()) {
    throw DimensionError("adamw_step: " + std::to_string(lr.size()) + " rates for " +
                         std::to_string(entries.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& p : entries) {
      state.m.push_back(Buffer<double>::Zero(p.tensor.numel()));
      state.v.push_back(Buffer<double>::Zero(p.tensor.numel()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, double(state.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, double(state.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor<Scalar> t = entries[i].tensor;
    Buffer<double> theta = t.values().template cast<double>();
    theta -= lr[i] * weight_decay * theta;
    if (t.has_grad()) {
      const Buffer<double> g = t.grad().template cast<double>();
      state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * g;
      state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * g.square();
      theta -= lr[i] * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + kAdamEps);
    }
    t.mutable_values() = theta.template cast<Scalar>();
  }
}

std::string trace_to_csv(const std::vector<TraceRow>& rows, LoopKind loop) {
  const bool kd = loop == LoopKind::kDistill;
  std::ostringstream out;
  out << (kd ? "step,giou,l1,focal,rm,mf,total\n" : "step,giou,l1,focal,total\n");
  for (const TraceRow& r : rows) {
    out << r.step << ',' << format_real(r.giou) << ',' << format_real(r.l1) << ',' << format_real(r.focal);
    if (kd) out << ',' << format_real(r.rm) << ',' << format_real(r.mf);
    out << ',' << format_real(r.total) << '\n';
  }
  return out.str();
}

PairSampler::PairSampler(const std::vector<Sequence>& data, const ModelConfig& model,
                         const TrainConfig& cfg, std::uint64_t seed)
    : data_(data), crop_(crop_config_for(model)), cfg_(cfg), rng_(seed) {
  if (data_.empty()) throw ValidationError("training corpus is empty");
}

TrainingSample PairSampler::next() {
  const Sequence& seq = data_[rng_.below(data_.size())];
  const auto n = static_cast<std::uint64_t>(seq.frames.size());
  const auto search = static_cast<Index>(rng_.below(n));
  const Index lo = std::max<Index>(0, search - cfg_.max_frame_gap);
  const Index hi = std::min<Index>(static_cast<Index>(n) - 1, search + cfg_.max_frame_gap);
  const Index tmpl = lo + static_cast<Index>(rng_.below(static_cast<std::uint64_t>(hi - lo + 1)));
  const BBox& gt = seq.meta.gt[static_cast<std::size_t>(search)];
  const double extent = std::sqrt(gt.w * gt.h);
  const double dx = cfg_.center_jitter * extent * (rng_.uniform() - 0.5);
  const double dy = cfg_.center_jitter * extent * (rng_.uniform() - 0.5);
  const double s = std::exp(cfg_.scale_jitter * rng_.uniform(-1.0, 1.0));
  const BBox anchor = BBox::from_center(gt.cx() + dx, gt.cy() + dy, gt.w * s, gt.h * s);
  CropWindow window;
  TrainingSample sample;
  sample.images = make_sample(seq.frames[static_cast<std::size_t>(tmpl)],
                              seq.meta.gt[static_cast<std::size_t>(tmpl)],
                              seq.frames[static_cast<std::size_t>(search)], anchor, crop_, &window);
  sample.gt_in_search = window.to_crop(gt);
  return sample;
}

namespace {

constexpr std::uint64_t kSamplerStream = 0x5a;

struct SampleLosses {
  double giou = 0.0;
  double l1 = 0.0;
  double focal = 0.0;
  double rm = 0.0;
  double mf = 0.0;
  double total = 0.0;
};

// Shared optimisation loop. `per_sample` runs forward and backward for one
// sample with the loss pre-scaled by `weight`.
template <typename PerSample>
std::vector<TraceRow> run_loop(ParameterSet<float>& params, const std::vector<Sequence>& data,
                               const ModelConfig& model_cfg, const TrainConfig& cfg,
                               const EpochHook& hook, PerSample per_sample) {
  std::vector<ParamGroup> groups;
  for (const auto& p : params.entries()) groups.push_back(parameter_group(p.name));
  PairSampler sampler(data, model_cfg, cfg, Rng(cfg.seed).fork(kSamplerStream).next_u64());
  AdamState state;
  const Index steps = std::max<Index>(1, cfg.samples_per_epoch / cfg.batch_size);
  const double weight = 1.0 / double(cfg.batch_size);
  std::vector<TraceRow> trace;
  Index step = 0;
  for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<double> lr;
    for (ParamGroup g : groups) lr.push_back(cfg.learning_rate(g, epoch));
    for (Index s = 0; s < steps; ++s) {
      params.zero_grad();
      TraceRow row;
      row.step = ++step;
      row.epoch = epoch;
      for (Index b = 0; b < cfg.batch_size; ++b) {
        const SampleLosses v = per_sample(sampler.next(), weight);
        if (!std::isfinite(v.total)) {
          throw NumericError("non-finite loss at step " + std::to_string(row.step));
        }
        row.giou += v.giou * weight;
        row.l1 += v.l1 * weight;
        row.focal += v.focal * weight;
        row.rm += v.rm * weight;
        row.mf += v.mf * weight;
        row.total += v.total * weight;
      }
      adamw_step(params, state, lr, cfg.weight_decay);
      trace.push_back(row);
    }
    if (hook) hook(epoch);
  }
  return trace;
}

SampleLosses values_of(const LossTerms<float>& t, const Tensor<float>& total) {
  SampleLosses v;
  v.giou = t.giou.item();
  v.l1 = t.l1.item();
  v.focal = t.focal.item();
  v.rm = t.rm.defined() ? double(t.rm.item()) : 0.0;
  v.mf = t.mf.defined() ? double(t.mf.item()) : 0.0;
  v.total = total.item();
  return v;
}

std::vector<TraceRow> train_student_impl(StudentModel<float>& student, const TeacherModel<float>* teacher,
                                         const std::vector<Sequence>& data, const TrainConfig& cfg,
                                         const EpochHook& hook) {
  const ModelConfig& mc = student.config();
  std::optional<ScopedNoGrad<float>> frozen;
  if (teacher) {
    if (teacher->config().search_size != mc.search_size || teacher->config().template_size != mc.template_size ||
        teacher->config().patch != mc.patch || teacher->config().dim != mc.dim ||
        teacher->config().layers != mc.layers) {
      throw ValidationError("teacher and student configurations are incompatible");
    }
    frozen.emplace(teacher->parameters());
  }
  return run_loop(student.parameters(), data, mc, cfg, hook, [&](const TrainingSample& s, double w) {
    const StudentOutput<float> out = student.forward(s.images);
    LossTerms<float> terms = ground_truth_losses(out.head, s.gt_in_search, mc);
    if (teacher) {
      const TeacherOutput<float> t = teacher->forward(s.images);
      terms.rm = response_kd_loss(t.head.score, out.head.score, cfg.weights.tau);
      terms.mf = feature_kd_loss(t.features, out.features, cfg.feature);
    }
    const Tensor<float> total = student_total(terms, cfg.weights);
    scale(total, static_cast<float>(w)).backward();
    return values_of(terms, total);
  });
}

}  // namespace

std::vector<TraceRow> train_teacher(TeacherModel<float>& model, const std::vector<Sequence>& data,
                                    const TrainConfig& cfg, const EpochHook& hook) {
  cfg.validate(LoopKind::kTeacher);
  const ModelConfig& mc = model.config();
  return run_loop(model.parameters(), data, mc, cfg, hook, [&](const TrainingSample& s, double w) {
    const TeacherOutput<float> out = model.forward(s.images);
    const LossTerms<float> terms = ground_truth_losses(out.head, s.gt_in_search, mc);
    const Tensor<float> total = teacher_total(terms, cfg.weights);
    scale(total, static_cast<float>(w)).backward();
    return values_of(terms, total);
  });
}

std::vector<TraceRow> distill_student(StudentModel<float>& student, const TeacherModel<float>& teacher,
                                      const std::vector<Sequence>& data, const TrainConfig& cfg,
                                      const EpochHook& hook) {
  cfg.validate(LoopKind::kDistill);
  return train_student_impl(student, &teacher, data, cfg, hook);
}

std::vector<TraceRow> train_fost(StudentModel<float>& model, const std::vector<Sequence>& data,
                                 const TrainConfig& cfg, const EpochHook& hook) {
  cfg.validate(LoopKind::kFost);
  return train_student_impl(model, nullptr, data, cfg, hook);
}

template void adamw_step(ParameterSet<float>&, AdamState&, const std::vector<double>&, double);
template void adamw_step(ParameterSet<double>&, AdamState&, const std::vector<double>&, double);

}  // namespace rtkd
