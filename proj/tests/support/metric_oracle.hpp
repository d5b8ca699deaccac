#pragma once

// Brute-force threshold sweeps, written from the metric definitions without
// reusing the library's scoring code.

#include <cmath>
#include <string>
#include <vector>

#include "rtkd/eval.hpp"
#include "rtkd/rng.hpp"

namespace rtkd::testing {

struct OracleCurves {
  std::vector<double> precision;  // CLE thresholds 0..50
  std::vector<double> success;    // IoU thresholds k / 20
  double pr = 0.0;
  double sr = 0.0;
};

inline double oracle_cle(const BBox& a, const BBox& b) {
  const double dx = (a.x + a.w / 2) - (b.x + b.w / 2);
  const double dy = (a.y + a.h / 2) - (b.y + b.h / 2);
  return std::sqrt(dx * dx + dy * dy);
}

inline double oracle_iou(const BBox& a, const BBox& b) {
  const double left = std::max(a.x, b.x);
  const double right = std::min(a.x + a.w, b.x + b.w);
  const double top = std::max(a.y, b.y);
  const double bottom = std::min(a.y + a.h, b.y + b.h);
  if (right <= left || bottom <= top) return 0.0;
  const double inter = (right - left) * (bottom - top);
  const double area_a = ((a.x + a.w) - a.x) * ((a.y + a.h) - a.y);
  const double area_b = ((b.x + b.w) - b.x) * ((b.y + b.h) - b.y);
  return inter / (area_a + area_b - inter);
}

inline OracleCurves oracle_curves(const std::vector<TrackResult>& results) {
  OracleCurves o;
  long frames = 0;
  for (const auto& r : results) frames += long(r.pred.size());
  for (int t = 0; t <= 50; ++t) {
    long hits = 0;
    for (const auto& r : results) {
      for (std::size_t i = 0; i < r.pred.size(); ++i) hits += oracle_cle(r.pred[i], r.gt[i]) <= t ? 1 : 0;
    }
    o.precision.push_back(double(hits) / double(frames));
  }
  long total_hits = 0;
  for (int k = 0; k <= 20; ++k) {
    long hits = 0;
    for (const auto& r : results) {
      for (std::size_t i = 0; i < r.pred.size(); ++i) {
        hits += oracle_iou(r.pred[i], r.gt[i]) >= double(k) / 20.0 ? 1 : 0;
      }
    }
    total_hits += hits;
    o.success.push_back(double(hits) / double(frames));
  }
  o.pr = o.precision[20];
  o.sr = double(total_hits) / (21.0 * double(frames));
  return o;
}

/// Random ground-truth walk with a noisy tracker following it; some frames
/// drift far off so every part of both curves gets exercised.
inline TrackResult random_trajectory(Rng& rng, const std::string& name) {
  TrackResult r;
  r.name = name;
  const auto n = static_cast<Index>(5 + rng.below(40));
  double cx = rng.uniform(20, 80), cy = rng.uniform(20, 80);
  const double spread = rng.uniform(0.5, 30.0);
  for (Index t = 0; t < n; ++t) {
    cx += rng.normal() * 2.0;
    cy += rng.normal() * 2.0;
    const double w = rng.uniform(5, 30), h = rng.uniform(5, 30);
    r.gt.push_back(BBox::from_center(cx, cy, w, h));
    if (rng.uniform() < 0.1) {
      r.pred.push_back(r.gt.back());
    } else {
      r.pred.push_back(BBox::from_center(cx + spread * rng.normal(), cy + spread * rng.normal(),
                                         w * std::exp(0.3 * rng.normal()), h * std::exp(0.3 * rng.normal())));
    }
  }
  r.attributes = {rng.uniform() < 0.5 ? "switching" : "occlusion"};
  return r;
}

}  // namespace rtkd::testing
