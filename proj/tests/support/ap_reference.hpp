#pragma once

// Brute-force reference scorer for the track AP/AR protocol. Written from the
// rule statement with its own primitives (decoded pixel grids, no caching) so
// it stays independent of the production implementation.

#include "tvis/core/mask.hpp"
#include "tvis/eval/metrics.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace tvis::testsupport {

inline Real reference_track_iou(const eval::TrackPrediction& p, const eval::GtTrack& g) {
  std::set<int> frames;
  for (const auto& [t, m] : p.masks) frames.insert(t);
  for (const auto& [t, m] : g.masks) frames.insert(t);
  long double inter = 0, uni = 0;
  for (int t : frames) {
    MaskGrid pg, gg;
    bool has_p = p.masks.count(t) > 0, has_g = g.masks.count(t) > 0;
    if (has_p) pg = rle_decode(p.masks.at(t));
    if (has_g) gg = rle_decode(g.masks.at(t));
    const int h = has_p ? pg.rows() : gg.rows();
    const int w = has_p ? pg.cols() : gg.cols();
    for (int c = 0; c < w; ++c)
      for (int r = 0; r < h; ++r) {
        const bool a = has_p && pg(r, c);
        const bool b = has_g && gg(r, c);
        if (a && b) ++inter;
        if (a || b) ++uni;
      }
  }
  if (uni == 0) return 1.0;
  return static_cast<Real>(inter / uni);
}

struct ReferenceReport {
  Real ap = 0, ap50 = 0, ap75 = 0, ar1 = 0, ar10 = 0;
};

inline ReferenceReport reference_ap_report(const std::vector<eval::TrackPrediction>& preds,
                                           const std::vector<eval::GtTrack>& gts) {
  ReferenceReport rep;
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);
  if (classes.empty()) return rep;

  const std::vector<Real> thresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                        0.75, 0.80, 0.85, 0.90, 0.95};

  Real sum_ap = 0, sum50 = 0, sum75 = 0, sum_ar1 = 0, sum_ar10 = 0;
  for (int cls : classes) {
    // Confidence-descending order; ties by video id then input position.
    std::vector<int> order;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].class_id == cls) order.push_back(static_cast<int>(i));
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (preds[a].confidence != preds[b].confidence)
        return preds[a].confidence > preds[b].confidence;
      if (preds[a].video_id != preds[b].video_id) return preds[a].video_id < preds[b].video_id;
      return a < b;
    });

    std::vector<int> gt_idx;
    for (std::size_t i = 0; i < gts.size(); ++i)
      if (gts[i].class_id == cls) gt_idx.push_back(static_cast<int>(i));
    const int num_gt = static_cast<int>(gt_idx.size());

    auto run_match = [&](const std::vector<int>& pranks, Real thr) {
      std::vector<char> used(gt_idx.size(), 0);
      std::vector<char> tp;
      for (int pi : pranks) {
        int best = -1;
        Real best_iou = -1;
        for (std::size_t k = 0; k < gt_idx.size(); ++k) {
          if (used[k] || gts[gt_idx[k]].video_id != preds[pi].video_id) continue;
          const Real iou = reference_track_iou(preds[pi], gts[gt_idx[k]]);
          if (iou >= thr && iou > best_iou) {
            best = static_cast<int>(k);
            best_iou = iou;
          }
        }
        if (best >= 0) {
          used[best] = 1;
          tp.push_back(1);
        } else {
          tp.push_back(0);
        }
      }
      return tp;
    };

    auto ap_of = [&](const std::vector<char>& tp) {
      if (num_gt == 0) return static_cast<Real>(0);
      Real best_total = 0;
      Real total = 0;
      for (int r100 = 0; r100 <= 100; ++r100) {
        const Real level = r100 / 100.0;
        Real best = 0;
        int tps = 0, seen = 0;
        for (char f : tp) {
          ++seen;
          if (f) ++tps;
          const Real recall = static_cast<Real>(tps) / num_gt;
          const Real precision = static_cast<Real>(tps) / seen;
          if (recall >= level) best = std::max(best, precision);
        }
        total += best;
      }
      best_total = total / 101.0;
      return best_total;
    };

    auto capped = [&](int cap) {
      std::map<std::string, int> used;
      std::vector<int> kept;
      for (int pi : order)
        if (used[preds[pi].video_id]++ < cap) kept.push_back(pi);
      return kept;
    };
    const std::vector<int> top1 = capped(1), top10 = capped(10);

    Real cls_ap = 0, cls_ar1 = 0, cls_ar10 = 0;
    for (Real thr : thresholds) {
      const Real ap = ap_of(run_match(order, thr));
      cls_ap += ap;
      if (thr == 0.50) sum50 += ap;
      if (thr == 0.75) sum75 += ap;
      int tp1 = 0, tp10 = 0;
      for (char f : run_match(top1, thr)) tp1 += f;
      for (char f : run_match(top10, thr)) tp10 += f;
      cls_ar1 += num_gt > 0 ? static_cast<Real>(tp1) / num_gt : 0;
      cls_ar10 += num_gt > 0 ? static_cast<Real>(tp10) / num_gt : 0;
    }
    sum_ap += cls_ap / thresholds.size();
    sum_ar1 += cls_ar1 / thresholds.size();
    sum_ar10 += cls_ar10 / thresholds.size();
  }

  const Real n = static_cast<Real>(classes.size());
  rep.ap = sum_ap / n;
  rep.ap50 = sum50 / n;
  rep.ap75 = sum75 / n;
  rep.ar1 = sum_ar1 / n;
  rep.ar10 = sum_ar10 / n;
  return rep;
}

}  // namespace tvis::testsupport
