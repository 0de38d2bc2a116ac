#pragma once

#include "tvis/assoc/tracker.hpp"
#include "tvis/pipeline/train.hpp"

#include <map>
#include <string>
#include <vector>

namespace tvis::pipeline {

struct InferOptions {
  std::string mode = "offline";  // "online" or "offline"
  int window = 10;               // 0 disables refinement
  bool feedback = true;          // online only: store refined embeddings
  assoc::AssocParams assoc;
  Real conf_floor = 0.05;  // tracks below this confidence are not emitted
};

struct InferOutputs {
  std::vector<FrameRecord> records;
  /// Refined embeddings keyed by (track_id, frame); empty for window = 0.
  std::map<std::pair<int, int>, Vec> refined;
  /// Tracklets after association (detection slots only for window = 0).
  std::vector<Tracklet> tracklets;
};

/// Associates detections into tracklets online, refines them in the requested
/// mode, and emits per-frame prediction records (class/confidence are
/// track-level aggregates). With window = 0 the frame-level head outputs are
/// emitted unrefined.
InferOutputs run_inference(const Model& model, const VideoData& video,
                           const InferOptions& opts);

}  // namespace tvis::pipeline
