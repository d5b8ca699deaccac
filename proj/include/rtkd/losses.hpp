#pragma once

#include <string>
#include <vector>

#include "rtkd/config.hpp"
#include "rtkd/head.hpp"
#include "rtkd/image.hpp"
#include "rtkd/models.hpp"

namespace rtkd {

/// Floor applied inside every logarithm.
inline constexpr double kLogFloor = 1e-7;

struct LossWeights {
  double giou = 2.0;
  double l1 = 5.0;
  double rm = 0.7;
  double mf = 0.035;
  double tau = 2.0;

  void validate() const;

  bool operator==(const LossWeights&) const = default;
};

/// Which teacher layers supervise the student features, and how the chosen
/// terms are weighted (uniform 1, or 2i for the i-th chosen layer).
enum class FeatureLayers { kEven, kFirst, kLast, kAll };
enum class FeatureWeighting { kUniform, kLinear };

struct FeatureKdOptions {
  FeatureLayers layers = FeatureLayers::kEven;
  FeatureWeighting weighting = FeatureWeighting::kUniform;

  bool operator==(const FeatureKdOptions&) const = default;
};

FeatureLayers parse_feature_layers(const std::string& name);
FeatureWeighting parse_feature_weighting(const std::string& name);
const char* feature_layers_name(FeatureLayers layers);
const char* feature_weighting_name(FeatureWeighting weighting);

/// 1-based layer indices compared for depth L. kFirst / kLast take L/2.
std::vector<Index> select_feature_layers(Index depth, FeatureLayers layers);

/// Generalized IoU of two pixel boxes.
double giou(const BBox& a, const BBox& b);

/// 1 - GIoU between a [4] or [1 x 4] (x, y, w, h) prediction and `gt`.
/// A zero-area gt raises DomainError.
template <typename Scalar>
Tensor<Scalar> giou_loss(const Tensor<Scalar>& pred, const BBox& gt);

/// Mean absolute difference over the four box coordinates.
template <typename Scalar>
Tensor<Scalar> l1_box_loss(const Tensor<Scalar>& pred, const BBox& gt);

/// Gaussian target on the G x G search grid with exactly 1 at the cell
/// holding the box centre; sigma = max(1, min(w, h) / (2P)) in cells.
template <typename Scalar>
Buffer<Scalar> build_gt_heatmap(const BBox& gt, Index grid, Index patch);

/// Penalty-reduced focal loss (alpha 2, beta 4) normalized by the number of
/// cells where heat == 1.
template <typename Scalar>
Tensor<Scalar> focal_loss_gt(const Tensor<Scalar>& score, const Buffer<Scalar>& heat);

/// Soft-target focal loss between tempered maps t = R_t / tau and
/// p = R_s / tau: mean over cells of (t - p)^2 * BCE(t, p). The teacher map
/// is read as a constant.
template <typename Scalar>
Tensor<Scalar> response_kd_loss(const Tensor<Scalar>& teacher_score,
                                const Tensor<Scalar>& student_score, double tau);

/// Weighted sum of MSE between the row-stacked teacher pair and the student
/// features at the selected layers. Teacher values are constants.
template <typename Scalar>
Tensor<Scalar> feature_kd_loss(const std::vector<LayerPair<Scalar>>& teacher,
                               const std::vector<Tensor<Scalar>>& student,
                               const FeatureKdOptions& options = {});

template <typename Scalar>
struct LossTerms {
  Tensor<Scalar> focal;
  Tensor<Scalar> giou;
  Tensor<Scalar> l1;
  Tensor<Scalar> rm;
  Tensor<Scalar> mf;
};

/// Focal, GIoU and L1 terms against a box given in search-crop pixels.
template <typename Scalar>
LossTerms<Scalar> ground_truth_losses(const HeadOutput<Scalar>& out, const BBox& gt_search,
                                      const ModelConfig& cfg);

/// focal + w.giou * giou + w.l1 * l1
template <typename Scalar>
Tensor<Scalar> teacher_total(const LossTerms<Scalar>& terms, const LossWeights& w);

/// teacher_total + w.rm * rm + w.mf * mf. Undefined KD terms count as zero.
template <typename Scalar>
Tensor<Scalar> student_total(const LossTerms<Scalar>& terms, const LossWeights& w);

}  // namespace rtkd
