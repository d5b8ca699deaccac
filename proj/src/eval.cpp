#include "rtkd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rtkd/errors.hpp"

namespace rtkd {

double cle(const BBox& pred, const BBox& gt) {
  return std::hypot(pred.cx() - gt.cx(), pred.cy() - gt.cy());
}

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  // Areas from the same edge differences, so identical boxes score exactly 1.
  auto edge_area = [](const BBox& r) { return ((r.x + r.w) - r.x) * ((r.y + r.h) - r.y); };
  const double uni = edge_area(a) + edge_area(b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

struct FrameScore {
  double cle;
  double iou;
};

CurveReport curves(const std::vector<FrameScore>& frames) {
  CurveReport r;
  const double n = static_cast<double>(frames.size());
  for (int t = 0; t < kPrecisionPoints; ++t) {
    const auto hits = std::count_if(frames.begin(), frames.end(),
                                    [&](const FrameScore& f) { return f.cle <= double(t); });
    r.precision_curve.push_back(double(hits) / n);
  }
  for (int k = 0; k < kSuccessPoints; ++k) {
    const double threshold = double(k) / double(kSuccessPoints - 1);
    const auto hits = std::count_if(frames.begin(), frames.end(),
                                    [&](const FrameScore& f) { return f.iou >= threshold; });
    r.success_curve.push_back(double(hits) / n);
  }
  r.pr = r.precision_curve[static_cast<std::size_t>(kPrecisionThreshold)];
  double total = 0.0;
  for (double s : r.success_curve) total += s;
  r.sr = total / double(kSuccessPoints);
  return r;
}

std::vector<FrameScore> score_frames(const TrackResult& r) {
  if (r.pred.size() != r.gt.size() || (!r.gt_alt.empty() && r.gt_alt.size() != r.gt.size())) {
    throw DimensionError("track result '" + r.name + "': " + std::to_string(r.pred.size()) +
                         " predictions vs " + std::to_string(r.gt.size()) + " ground-truth boxes");
  }
  std::vector<FrameScore> out;
  for (std::size_t i = 0; i < r.pred.size(); ++i) {
    FrameScore f{cle(r.pred[i], r.gt[i]), iou(r.pred[i], r.gt[i])};
    if (!r.gt_alt.empty()) {
      f.cle = std::min(f.cle, cle(r.pred[i], r.gt_alt[i]));
      f.iou = std::max(f.iou, iou(r.pred[i], r.gt_alt[i]));
    }
    out.push_back(f);
  }
  return out;
}

}  // namespace

MetricReport precision_success(const std::vector<TrackResult>& results) {
  std::vector<FrameScore> all;
  std::map<std::string, std::vector<FrameScore>> by_attribute;
  for (const TrackResult& r : results) {
    const std::vector<FrameScore> frames = score_frames(r);
    all.insert(all.end(), frames.begin(), frames.end());
    const std::set<std::string> tags(r.attributes.begin(), r.attributes.end());
    for (const auto& tag : tags) {
      auto& bucket = by_attribute[tag];
      bucket.insert(bucket.end(), frames.begin(), frames.end());
    }
  }
  if (all.empty()) throw DomainError("precision_success: no frames to score");
  MetricReport report;
  static_cast<CurveReport&>(report) = curves(all);
  for (const auto& [tag, frames] : by_attribute) {
    if (!frames.empty()) report.attributes[tag] = curves(frames);
  }
  return report;
}

double f_score(double pr, double re) {
  if (pr + re == 0.0) return 0.0;
  return 2.0 * re * pr / (re + pr);
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["pr"] = report.pr;
  j["sr"] = report.sr;
  j["precision_curve"] = report.precision_curve;
  j["success_curve"] = report.success_curve;
  nlohmann::ordered_json attrs = nlohmann::ordered_json::object();
  for (const auto& [tag, r] : report.attributes) attrs[tag] = {{"pr", r.pr}, {"sr", r.sr}};
  j["attributes"] = attrs;
  return j.dump(1) + "\n";
}

std::string report_to_csv(const MetricReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "curve,threshold,value\n";
  for (std::size_t t = 0; t < report.precision_curve.size(); ++t) {
    out << "precision," << t << ',' << report.precision_curve[t] << '\n';
  }
  for (std::size_t k = 0; k < report.success_curve.size(); ++k) {
    out << "success," << double(k) / double(kSuccessPoints - 1) << ',' << report.success_curve[k] << '\n';
  }
  return out.str();
}

}  // namespace rtkd
