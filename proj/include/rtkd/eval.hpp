#pragma once

#include <map>
#include <string>
#include <vector>

#include "rtkd/image.hpp"

namespace rtkd {

inline constexpr double kPrecisionThreshold = 20.0;
inline constexpr int kPrecisionPoints = 51;  // CLE 0..50 px
inline constexpr int kSuccessPoints = 21;    // IoU 0..1 step 0.05

/// Distance between box centres.
double cle(const BBox& pred, const BBox& gt);
double iou(const BBox& a, const BBox& b);

struct TrackResult {
  std::string name;
  std::vector<BBox> pred;
  std::vector<BBox> gt;
  /// Optional second ground truth per frame; when present each frame is
  /// scored against whichever of the two is closer.
  std::vector<BBox> gt_alt;
  std::vector<std::string> attributes;
};

struct CurveReport {
  double pr = 0.0;
  double sr = 0.0;
  std::vector<double> precision_curve;
  std::vector<double> success_curve;

  bool operator==(const CurveReport&) const = default;
};

struct MetricReport : CurveReport {
  std::map<std::string, CurveReport> attributes;

  bool operator==(const MetricReport&) const = default;
};

/// Pools all frames: precision[t] = share with CLE <= t, success[k] = share
/// with IoU >= k / 20, PR = precision[20], SR = mean of the success curve.
MetricReport precision_success(const std::vector<TrackResult>& results);

/// Harmonic mean of precision and recall, 0 when both are 0.
double f_score(double pr, double re);

std::string report_to_json(const MetricReport& report);
/// Columns: curve, threshold, value.
std::string report_to_csv(const MetricReport& report);

}  // namespace rtkd
