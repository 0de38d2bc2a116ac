#include "tvis/eval/metrics.hpp"

#include "tvis/core/mask.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace tvis::eval {

Real track_iou(const TrackPrediction& pred, const GtTrack& gt) {
  std::set<int> frames;
  int h = -1, w = -1;
  auto note_res = [&](const BinaryMask& m) {
    if (h < 0) {
      h = m.height;
      w = m.width;
    } else if (m.height != h || m.width != w) {
      throw std::invalid_argument("track_iou: mask resolution mismatch");
    }
  };
  for (const auto& [t, m] : pred.masks) {
    frames.insert(t);
    note_res(m);
  }
  for (const auto& [t, m] : gt.masks) {
    frames.insert(t);
    note_res(m);
  }

  std::int64_t inter = 0, uni = 0;
  for (int t : frames) {
    auto ip = pred.masks.find(t);
    auto ig = gt.masks.find(t);
    const std::int64_t ap = ip == pred.masks.end() ? 0 : ip->second.area();
    const std::int64_t ag = ig == gt.masks.end() ? 0 : ig->second.area();
    std::int64_t in = 0;
    if (ap > 0 && ag > 0) in = mask_intersection(ip->second, ig->second);
    inter += in;
    uni += ap + ag - in;
  }
  if (uni == 0) return 1.0;  // both tracks empty everywhere
  return static_cast<Real>(inter) / static_cast<Real>(uni);
}

namespace {

const std::vector<Real>& iou_thresholds() {
  static const std::vector<Real> t = {0.50, 0.55, 0.60, 0.65, 0.70,
                                      0.75, 0.80, 0.85, 0.90, 0.95};
  return t;
}

// 101-point interpolated average precision from cumulative TP/FP flags of
// confidence-sorted predictions.
Real interpolated_ap(const std::vector<char>& tp_flags, int num_gt) {
  if (num_gt == 0) return 0;
  std::vector<Real> precision, recall;
  int tp = 0, fp = 0;
  for (char f : tp_flags) {
    f ? ++tp : ++fp;
    precision.push_back(static_cast<Real>(tp) / (tp + fp));
    recall.push_back(static_cast<Real>(tp) / num_gt);
  }
  Real ap = 0;
  for (int r = 0; r <= 100; ++r) {
    const Real level = r / 100.0;
    Real best = 0;
    for (std::size_t k = 0; k < precision.size(); ++k)
      if (recall[k] >= level) best = std::max(best, precision[k]);
    ap += best;
  }
  return ap / 101.0;
}

struct PredRef {
  const TrackPrediction* pred;
  int order;  // original position, for deterministic tie-breaking
};

// Greedy matching of confidence-sorted predictions against unmatched ground
// truth of the same video; returns one TP/FP flag per prediction in sorted
// order and the number of matched gts.
std::pair<std::vector<char>, int> greedy_flags(
    const std::vector<PredRef>& sorted_preds, const std::vector<const GtTrack*>& gts,
    const std::map<std::pair<const TrackPrediction*, const GtTrack*>, Real>& iou_cache,
    Real threshold) {
  std::vector<char> matched(gts.size(), 0);
  std::vector<char> flags;
  flags.reserve(sorted_preds.size());
  int tp = 0;
  for (const PredRef& pr : sorted_preds) {
    int best = -1;
    Real best_iou = threshold;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (matched[g] || gts[g]->video_id != pr.pred->video_id) continue;
      auto it = iou_cache.find({pr.pred, gts[g]});
      const Real iou = it == iou_cache.end() ? 0 : it->second;
      if (iou >= best_iou && (best < 0 || iou > best_iou)) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      matched[best] = 1;
      flags.push_back(1);
      ++tp;
    } else {
      flags.push_back(0);
    }
  }
  return {flags, tp};
}

std::vector<PredRef> sort_by_confidence(std::vector<PredRef> preds) {
  std::sort(preds.begin(), preds.end(), [](const PredRef& a, const PredRef& b) {
    if (a.pred->confidence != b.pred->confidence)
      return a.pred->confidence > b.pred->confidence;
    if (a.pred->video_id != b.pred->video_id) return a.pred->video_id < b.pred->video_id;
    return a.order < b.order;
  });
  return preds;
}

}  // namespace

ApReport video_ap_report(const std::vector<TrackPrediction>& preds,
                         const std::vector<GtTrack>& gts) {
  ApReport report;
  report.num_gt_tracks = static_cast<int>(gts.size());
  report.num_predictions = static_cast<int>(preds.size());

  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);
  if (classes.empty()) return report;

  Real sum_ap = 0, sum_ap50 = 0, sum_ap75 = 0, sum_ar1 = 0, sum_ar10 = 0;
  for (int cls : classes) {
    std::vector<const GtTrack*> cls_gts;
    for (const auto& g : gts)
      if (g.class_id == cls) cls_gts.push_back(&g);
    std::vector<PredRef> cls_preds;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].class_id == cls) cls_preds.push_back({&preds[i], static_cast<int>(i)});

    // IoU computed once per (pred, gt) pair within the same video.
    std::map<std::pair<const TrackPrediction*, const GtTrack*>, Real> iou_cache;
    for (const PredRef& p : cls_preds)
      for (const GtTrack* g : cls_gts)
        if (g->video_id == p.pred->video_id) iou_cache[{p.pred, g}] = track_iou(*p.pred, *g);

    const std::vector<PredRef> sorted = sort_by_confidence(cls_preds);

    // AR caps predictions per video (AP stays uncapped).
    auto capped = [&](int cap) {
      std::map<std::string, int> used;
      std::vector<PredRef> kept;
      for (const PredRef& p : sorted)
        if (used[p.pred->video_id]++ < cap) kept.push_back(p);
      return kept;
    };
    const std::vector<PredRef> top1 = capped(1);
    const std::vector<PredRef> top10 = capped(10);

    const int num_gt = static_cast<int>(cls_gts.size());
    Real cls_ap = 0, cls_ar1 = 0, cls_ar10 = 0;
    for (Real thr : iou_thresholds()) {
      auto [flags, tp] = greedy_flags(sorted, cls_gts, iou_cache, thr);
      const Real ap = interpolated_ap(flags, num_gt);
      cls_ap += ap;
      if (thr == 0.50) sum_ap50 += ap;
      if (thr == 0.75) sum_ap75 += ap;
      cls_ar1 += static_cast<Real>(greedy_flags(top1, cls_gts, iou_cache, thr).second) / num_gt;
      cls_ar10 +=
          static_cast<Real>(greedy_flags(top10, cls_gts, iou_cache, thr).second) / num_gt;
    }
    const Real nthr = static_cast<Real>(iou_thresholds().size());
    report.per_class_ap[cls] = cls_ap / nthr;
    sum_ap += cls_ap / nthr;
    sum_ar1 += cls_ar1 / nthr;
    sum_ar10 += cls_ar10 / nthr;
  }

  const Real ncls = static_cast<Real>(classes.size());
  report.ap = sum_ap / ncls;
  report.ap50 = sum_ap50 / ncls;
  report.ap75 = sum_ap75 / ncls;
  report.ar1 = sum_ar1 / ncls;
  report.ar10 = sum_ar10 / ncls;
  return report;
}

}  // namespace tvis::eval
