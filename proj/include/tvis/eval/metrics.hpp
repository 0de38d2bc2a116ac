#pragma once

#include "tvis/core/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace tvis::eval {

/// One predicted spatiotemporal track: per-frame masks (absent = empty).
struct TrackPrediction {
  std::string video_id;
  int class_id = 0;
  Real confidence = 0;
  std::map<int, BinaryMask> masks;
};

struct GtTrack {
  std::string video_id;
  int track_id = -1;
  int class_id = 0;
  std::map<int, BinaryMask> masks;
};

/// sum_t |pred_t ∩ gt_t| / sum_t |pred_t ∪ gt_t| over the union of annotated
/// frames; a frame without a mask counts as empty. Two everywhere-empty
/// tracks have IoU 1.
Real track_iou(const TrackPrediction& pred, const GtTrack& gt);

struct ApReport {
  Real ap = 0;     // mean over IoU thresholds 0.50:0.05:0.95
  Real ap50 = 0;
  Real ap75 = 0;
  Real ar1 = 0;
  Real ar10 = 0;
  std::map<int, Real> per_class_ap;
  int num_gt_tracks = 0;
  int num_predictions = 0;
};

/// COCO/YouTube-VIS style evaluation: greedy confidence-descending matching
/// per class and threshold, 101-point interpolated precision, AR with at most
/// k predictions per video, averaged over classes that have ground truth.
ApReport video_ap_report(const std::vector<TrackPrediction>& preds,
                         const std::vector<GtTrack>& gts);

}  // namespace tvis::eval
