#include "rtkd/losses.hpp"

#include <algorithm>
#include <cmath>

#include "rtkd/errors.hpp"

namespace rtkd {

void LossWeights::validate() const {
  for (double v : {giou, l1, rm, mf}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("loss weights must be finite and non-negative");
  }
  if (!(tau > 0.0)) throw DomainError("tau must be positive, got " + std::to_string(tau));
}

FeatureLayers parse_feature_layers(const std::string& name) {
  if (name == "even") return FeatureLayers::kEven;
  if (name == "first") return FeatureLayers::kFirst;
  if (name == "last") return FeatureLayers::kLast;
  if (name == "all") return FeatureLayers::kAll;
  throw ValidationError("unknown feature layer selection '" + name + "' (even, first, last, all)");
}

FeatureWeighting parse_feature_weighting(const std::string& name) {
  if (name == "uniform") return FeatureWeighting::kUniform;
  if (name == "linear") return FeatureWeighting::kLinear;
  throw ValidationError("unknown feature weighting '" + name + "' (uniform, linear)");
}

const char* feature_layers_name(FeatureLayers layers) {
  switch (layers) {
    case FeatureLayers::kEven:
      return "even";
    case FeatureLayers::kFirst:
      return "first";
    case FeatureLayers::kLast:
      return "last";
    case FeatureLayers::kAll:
      return "all";
  }
  return "even";
}

const char* feature_weighting_name(FeatureWeighting weighting) {
  return weighting == FeatureWeighting::kUniform ? "uniform" : "linear";
}

std::vector<Index> select_feature_layers(Index depth, FeatureLayers layers) {
  std::vector<Index> out;
  const Index half = depth / 2;
  switch (layers) {
    case FeatureLayers::kEven:
      for (Index l = 2; l <= depth; l += 2) out.push_back(l);
      break;
    case FeatureLayers::kFirst:
      for (Index l = 1; l <= half; ++l) out.push_back(l);
      break;
    case FeatureLayers::kLast:
      for (Index l = depth - half + 1; l <= depth; ++l) out.push_back(l);
      break;
    case FeatureLayers::kAll:
      for (Index l = 1; l <= depth; ++l) out.push_back(l);
      break;
  }
  return out;
}

namespace {

double floored_log(double v) { return std::log(std::max(v, kLogFloor)); }
// Derivative of floored_log.
double floored_log_grad(double v) { return v > kLogFloor ? 1.0 / v : 0.0; }

template <typename Scalar>
void require_box_shape(const Tensor<Scalar>& pred, const char* op) {
  if (pred.numel() != 4 || !(pred.shape() == Shape{4} || pred.shape() == Shape{1, 4})) {
    throw DimensionError(std::string(op) + ": expected a [4] or [1 x 4] box, got " +
                         shape_string(pred.shape()));
  }
}

void require_positive_box(const BBox& b, const char* op, const char* what) {
  if (!(b.w > 0.0) || !(b.h > 0.0)) {
    throw DomainError(std::string(op) + ": " + what + " box has non-positive extent " +
                      std::to_string(b.w) + "x" + std::to_string(b.h));
  }
}

// Gradient of 2 - I/U - U/C with respect to (x, y, w, h) of the prediction.
struct GiouEval {
  double loss = 0.0;
  double grad[4] = {0.0, 0.0, 0.0, 0.0};
};

GiouEval giou_eval(const BBox& p, const BBox& g) {
  const double px1 = p.x, px2 = p.x + p.w, py1 = p.y, py2 = p.y + p.h;
  const double gx1 = g.x, gx2 = g.x + g.w, gy1 = g.y, gy2 = g.y + g.h;

  const double ix = std::min(px2, gx2) - std::max(px1, gx1);
  const double iy = std::min(py2, gy2) - std::max(py1, gy1);
  const bool overlap = ix > 0.0 && iy > 0.0;
  const double inter = overlap ? ix * iy : 0.0;
  const double area_p = p.w * p.h;
  const double uni = area_p + g.w * g.h - inter;
  const double cw = std::max(px2, gx2) - std::min(px1, gx1);
  const double ch = std::max(py2, gy2) - std::min(py1, gy1);
  const double enc = cw * ch;

  GiouEval e;
  e.loss = 2.0 - inter / uni - uni / enc;

  const double d_inter = -1.0 / uni - inter / (uni * uni) + 1.0 / enc;
  const double d_area = inter / (uni * uni) - 1.0 / enc;
  const double d_enc = uni / (enc * enc);

  // Partials with respect to the four pred edges.
  double dx1 = 0.0, dx2 = 0.0, dy1 = 0.0, dy2 = 0.0;
  if (overlap) {
    if (px1 >= gx1) dx1 -= d_inter * iy;
    if (px2 <= gx2) dx2 += d_inter * iy;
    if (py1 >= gy1) dy1 -= d_inter * ix;
    if (py2 <= gy2) dy2 += d_inter * ix;
  }
  if (px1 <= gx1) dx1 -= d_enc * ch;
  if (px2 >= gx2) dx2 += d_enc * ch;
  if (py1 <= gy1) dy1 -= d_enc * cw;
  if (py2 >= gy2) dy2 += d_enc * cw;

  e.grad[0] = dx1 + dx2;
  e.grad[1] = dy1 + dy2;
  e.grad[2] = dx2 + d_area * p.h;
  e.grad[3] = dy2 + d_area * p.w;
  return e;
}

template <typename Scalar>
Tensor<Scalar> constant_box(const BBox& b, const Shape& shape) {
  Buffer<Scalar> v(4);
  v << static_cast<Scalar>(b.x), static_cast<Scalar>(b.y), static_cast<Scalar>(b.w),
      static_cast<Scalar>(b.h);
  return Tensor<Scalar>(shape, std::move(v));
}

}  // namespace

double giou(const BBox& a, const BBox& b) {
  require_positive_box(a, "giou", "first");
  require_positive_box(b, "giou", "second");
  return 1.0 - giou_eval(a, b).loss;
}

template <typename Scalar>
Tensor<Scalar> giou_loss(const Tensor<Scalar>& pred, const BBox& gt) {
  require_box_shape(pred, "giou_loss");
  require_positive_box(gt, "giou_loss", "ground-truth");
  const BBox p{double(pred[0]), double(pred[1]), double(pred[2]), double(pred[3])};
  require_positive_box(p, "giou_loss", "predicted");
  const GiouEval e = giou_eval(p, gt);
  Buffer<Scalar> out = Buffer<Scalar>::Constant(1, static_cast<Scalar>(e.loss));
  auto pn = pred.node();
  return make_result<Scalar>(Shape{1}, std::move(out), {&pred}, [pn, e](auto& self) {
    const double g = double(self.grad[0]);
    Buffer<Scalar> d(4);
    for (int i = 0; i < 4; ++i) d[i] = static_cast<Scalar>(g * e.grad[i]);
    pn->accumulate(d);
  });
}

template <typename Scalar>
Tensor<Scalar> l1_box_loss(const Tensor<Scalar>& pred, const BBox& gt) {
  require_box_shape(pred, "l1_box_loss");
  return mean(absolute(sub(pred, constant_box<Scalar>(gt, pred.shape()))));
}

template <typename Scalar>
Buffer<Scalar> build_gt_heatmap(const BBox& gt, Index grid, Index patch) {
  const double side = static_cast<double>(grid * patch);
  const double cx = gt.cx();
  const double cy = gt.cy();
  if (!(cx >= 0.0 && cx < side && cy >= 0.0 && cy < side)) {
    throw DomainError("build_gt_heatmap: box centre (" + std::to_string(cx) + ", " +
                      std::to_string(cy) + ") outside the " + std::to_string(grid * patch) +
                      " pixel search frame");
  }
  const Index ci = static_cast<Index>(std::floor(cy / double(patch)));
  const Index cj = static_cast<Index>(std::floor(cx / double(patch)));
  const double sigma = std::max(1.0, std::min(gt.w, gt.h) / (2.0 * double(patch)));
  Buffer<Scalar> heat(grid * grid);
  for (Index i = 0; i < grid; ++i) {
    for (Index j = 0; j < grid; ++j) {
      const double r2 = double((i - ci) * (i - ci) + (j - cj) * (j - cj));
      heat[i * grid + j] = static_cast<Scalar>(std::exp(-r2 / (2.0 * sigma * sigma)));
    }
  }
  heat[ci * grid + cj] = Scalar(1);
  return heat;
}

template <typename Scalar>
Tensor<Scalar> focal_loss_gt(const Tensor<Scalar>& score, const Buffer<Scalar>& heat) {
  if (score.numel() != heat.size()) {
    throw DimensionError("focal_loss_gt: score " + shape_string(score.shape()) + " vs heatmap of " +
                         std::to_string(heat.size()) + " cells");
  }
  const Buffer<Scalar>& p = score.values();
  Index positives = 0;
  for (Index i = 0; i < heat.size(); ++i) positives += heat[i] == Scalar(1) ? 1 : 0;
  const double norm = static_cast<double>(std::max<Index>(positives, 1));

  double total = 0.0;
  Buffer<double> dp(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    const double pi = p[i];
    if (heat[i] == Scalar(1)) {
      const double q = 1.0 - pi;
      total += -q * q * floored_log(pi);
      dp[i] = 2.0 * q * floored_log(pi) - q * q * floored_log_grad(pi);
    } else {
      const double w = std::pow(1.0 - double(heat[i]), 4);
      total += -w * pi * pi * floored_log(1.0 - pi);
      dp[i] = -w * (2.0 * pi * floored_log(1.0 - pi) - pi * pi * floored_log_grad(1.0 - pi));
    }
  }
  Buffer<Scalar> out = Buffer<Scalar>::Constant(1, static_cast<Scalar>(total / norm));
  auto sn = score.node();
  return make_result<Scalar>(Shape{1}, std::move(out), {&score}, [sn, dp, norm](auto& self) {
    const double g = double(self.grad[0]) / norm;
    sn->accumulate((dp * g).template cast<Scalar>());
  });
}

template <typename Scalar>
Tensor<Scalar> response_kd_loss(const Tensor<Scalar>& teacher_score,
                                const Tensor<Scalar>& student_score, double tau) {
  if (teacher_score.shape() != student_score.shape()) {
    throw DimensionError("response_kd_loss: teacher " + shape_string(teacher_score.shape()) +
                         " vs student " + shape_string(student_score.shape()));
  }
  if (!(tau > 0.0)) throw DomainError("response_kd_loss: tau must be positive");
  const Index n = student_score.numel();
  double total = 0.0;
  Buffer<double> dr(n);
  for (Index i = 0; i < n; ++i) {
    const double t = double(teacher_score[i]) / tau;
    const double p = double(student_score[i]) / tau;
    const double diff = t - p;
    const double bce = -t * floored_log(p) - (1.0 - t) * floored_log(1.0 - p);
    const double dbce = -t * floored_log_grad(p) + (1.0 - t) * floored_log_grad(1.0 - p);
    total += diff * diff * bce;
    dr[i] = (-2.0 * diff * bce + diff * diff * dbce) / tau;
  }
  Buffer<Scalar> out = Buffer<Scalar>::Constant(1, static_cast<Scalar>(total / double(n)));
  auto sn = student_score.node();
  return make_result<Scalar>(Shape{1}, std::move(out), {&student_score}, [sn, dr, n](auto& self) {
    const double g = double(self.grad[0]) / double(n);
    sn->accumulate((dr * g).template cast<Scalar>());
  });
}

template <typename Scalar>
Tensor<Scalar> feature_kd_loss(const std::vector<LayerPair<Scalar>>& teacher,
                               const std::vector<Tensor<Scalar>>& student,
                               const FeatureKdOptions& options) {
  if (teacher.size() != student.size()) {
    throw DimensionError("feature_kd_loss: teacher has " + std::to_string(teacher.size()) +
                         " layers, student " + std::to_string(student.size()));
  }
  const std::vector<Index> chosen =
      select_feature_layers(static_cast<Index>(teacher.size()), options.layers);
  if (chosen.empty()) throw DomainError("feature_kd_loss: no layers selected");
  Tensor<Scalar> total;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const auto l = static_cast<std::size_t>(chosen[i] - 1);
    const LayerPair<Scalar>& t = teacher[l];
    const Tensor<Scalar>& s = student[l];
    if (t.rgb.rank() != 2 || t.rgb.shape() != t.tir.shape() || s.rank() != 2 ||
        s.dim(0) != 2 * t.rgb.dim(0) || s.dim(1) != t.rgb.dim(1)) {
      throw DimensionError("feature_kd_loss: layer " + std::to_string(chosen[i]) + " teacher " +
                           shape_string(t.rgb.shape()) + " x2 vs student " + shape_string(s.shape()));
    }
    Buffer<Scalar> target(s.numel());
    target << t.rgb.values(), t.tir.values();
    Tensor<Scalar> term = mse(s, target);
    if (options.weighting == FeatureWeighting::kLinear) {
      term = scale(term, static_cast<Scalar>(2 * (i + 1)));
    }
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

template <typename Scalar>
LossTerms<Scalar> ground_truth_losses(const HeadOutput<Scalar>& out, const BBox& gt_search,
                                      const ModelConfig& cfg) {
  const double side = static_cast<double>(cfg.search_size);
  const BBox gt_norm{gt_search.x / side, gt_search.y / side, gt_search.w / side, gt_search.h / side};
  LossTerms<Scalar> terms;
  terms.focal = focal_loss_gt(out.score, build_gt_heatmap<Scalar>(gt_search, cfg.search_grid(), cfg.patch));
  terms.giou = giou_loss(out.box, gt_norm);
  terms.l1 = l1_box_loss(out.box, gt_norm);
  return terms;
}

template <typename Scalar>
Tensor<Scalar> teacher_total(const LossTerms<Scalar>& terms, const LossWeights& w) {
  return add(add(terms.focal, scale(terms.giou, static_cast<Scalar>(w.giou))),
             scale(terms.l1, static_cast<Scalar>(w.l1)));
}

template <typename Scalar>
Tensor<Scalar> student_total(const LossTerms<Scalar>& terms, const LossWeights& w) {
  Tensor<Scalar> total = teacher_total(terms, w);
  if (w.rm != 0.0 && terms.rm.defined()) total = add(total, scale(terms.rm, static_cast<Scalar>(w.rm)));
  if (w.mf != 0.0 && terms.mf.defined()) total = add(total, scale(terms.mf, static_cast<Scalar>(w.mf)));
  return total;
}

#define RTKD_INSTANTIATE_LOSSES(S)                                                              \
  template Tensor<S> giou_loss(const Tensor<S>&, const BBox&);                                  \
  template Tensor<S> l1_box_loss(const Tensor<S>&, const BBox&);                                \
  template Buffer<S> build_gt_heatmap<S>(const BBox&, Index, Index);                            \
  template Tensor<S> focal_loss_gt(const Tensor<S>&, const Buffer<S>&);                         \
  template Tensor<S> response_kd_loss(const Tensor<S>&, const Tensor<S>&, double);              \
  template Tensor<S> feature_kd_loss(const std::vector<LayerPair<S>>&,                          \
                                     const std::vector<Tensor<S>>&, const FeatureKdOptions&);   \
  template LossTerms<S> ground_truth_losses(const HeadOutput<S>&, const BBox&,                  \
                                            const ModelConfig&);                                \
  template Tensor<S> teacher_total(const LossTerms<S>&, const LossWeights&);                    \
  template Tensor<S> student_total(const LossTerms<S>&, const LossWeights&);

RTKD_INSTANTIATE_LOSSES(float)
RTKD_INSTANTIATE_LOSSES(double)

}  // namespace rtkd
