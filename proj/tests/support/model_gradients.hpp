#pragma once

// Finite-difference replays of the complete training objectives on a small
// double-precision model. The regression cell is pinned to the unperturbed
// argmax so the stencil never crosses a peak switch.

#include "finite_difference.hpp"
#include "fixtures.hpp"
#include "rtkd/losses.hpp"
#include "rtkd/models.hpp"

namespace rtkd::testing {

inline BBox random_search_box(const ModelConfig& cfg, Rng& rng) {
  const double side = double(cfg.search_size);
  const double w = side * (0.15 + 0.3 * rng.uniform());
  const double h = side * (0.15 + 0.3 * rng.uniform());
  const double cx = side * (0.25 + 0.5 * rng.uniform());
  const double cy = side * (0.25 + 0.5 * rng.uniform());
  return BBox::from_center(cx, cy, w, h);
}

/// Directional check of teacher_total over every teacher parameter.
inline GradCheck teacher_loss_check(std::uint64_t seed) {
  const ModelConfig cfg = small_config();
  TeacherModel<double> model(cfg, seed);
  Rng rng(seed * 7919 + 1);
  // Larger scales let the multiplicative prompter chain blow features up to
  // 1e20, where a finite difference no longer resolves anything.
  randomize(model.parameters(), rng, 0.2);
  const SampleImages images = random_sample(cfg, rng);
  const BBox gt = random_search_box(cfg, rng);
  ForwardOptions opts;
  opts.forced_peak = model.forward(images).head.peak;
  std::vector<Tensor<double>> leaves;
  for (const auto& p : model.parameters().entries()) leaves.push_back(p.tensor);
  return directional_check(
      [&] {
        const auto out = model.forward(images, opts);
        return teacher_total(ground_truth_losses(out.head, gt, cfg), LossWeights{});
      },
      leaves, rng, 1e-5);
}

/// Directional check of student_total (all five terms, teacher frozen) over
/// every student parameter.
inline GradCheck student_loss_check(std::uint64_t seed) {
  const ModelConfig cfg = small_config();
  TeacherModel<double> teacher(cfg, seed);
  StudentModel<double> student(cfg, seed + 1);
  Rng rng(seed * 104729 + 3);
  randomize(teacher.parameters(), rng, 0.2);
  randomize(student.parameters(), rng, 0.2);
  teacher.parameters().set_requires_grad(false);
  const SampleImages images = random_sample(cfg, rng);
  const BBox gt = random_search_box(cfg, rng);
  const auto t_out = teacher.forward(images);
  ForwardOptions opts;
  opts.forced_peak = student.forward(images).head.peak;
  std::vector<Tensor<double>> leaves;
  for (const auto& p : student.parameters().entries()) leaves.push_back(p.tensor);
  FeatureKdOptions fopts;
  fopts.layers = FeatureLayers::kAll;
  return directional_check(
      [&] {
        const auto out = student.forward(images, opts);
        LossTerms<double> terms = ground_truth_losses(out.head, gt, cfg);
        terms.rm = response_kd_loss(t_out.head.score, out.head.score, 2.0);
        terms.mf = feature_kd_loss(t_out.features, out.features, fopts);
        LossWeights w;
        w.mf = 1.0;  // keep the feature term visible next to the others
        return student_total(terms, w);
      },
      leaves, rng, 1e-5);
}

}  // namespace rtkd::testing
