#pragma once

#include "tvis/assoc/contrastive.hpp"
#include "tvis/core/types.hpp"

#include <utility>
#include <vector>

namespace tvis::assoc {

struct AssocParams {
  Real tau_match = 0.5;
  Real tau_det = 0.4;
  Real momentum = 0.5;
  int max_age = 10;
  Real temperature = 10.0;  // sharpens the bi-softmax so exact matches reach ~1
  bool use_hungarian = false;

  /// Lowered thresholds used while training so early noisy predictions still
  /// receive association supervision.
  AssocParams scaled_for_training(Real scale = 0.5) const {
    AssocParams p = *this;
    p.tau_match *= scale;
    p.tau_det *= scale;
    return p;
  }
};

struct MemoryEntry {
  int track_id = -1;
  Vec embedding;  // unit contrastive embedding representing the tracklet
  int last_seen = -1;
  Real confidence = 0;
};

struct AssocMemory {
  std::vector<MemoryEntry> entries;
  int next_track_id = 1;

  const MemoryEntry* find(int track_id) const;
};

struct Assignment {
  int det_index = -1;
  int track_id = -1;
  bool is_new = false;
};

/// Geometric mean of row-wise and column-wise softmax of temperature-scaled
/// cosine similarities. Each softmax includes a virtual novel-object
/// alternative at cosine = background so unmatched objects can score low.
Mat bi_softmax_similarity(const Mat& cosine, Real temperature, Real background = 0.5);

/// Deterministic descending-score one-to-one matching; pairs below threshold
/// are left unmatched. Returns (row, col) pairs.
std::vector<std::pair<int, int>> greedy_match(const Mat& scores, Real threshold);

/// Max-total-score assignment (Kuhn-Munkres), thresholded afterwards.
std::vector<std::pair<int, int>> hungarian_match(const Mat& scores, Real threshold);

/// Matches detections against tracklet memory by bi-softmax similarity of
/// projected embeddings; unmatched detections above the confidence threshold
/// spawn new tracklets (entries appended to memory).
std::vector<Assignment> associate_frame(const std::vector<FrameDetection>& dets,
                                        AssocMemory& memory, const ContrastiveHead& head,
                                        const AssocParams& params, int frame_index);

/// Variant taking pre-projected embeddings (unit contrastive space).
std::vector<Assignment> associate_frame(const std::vector<Vec>& projected,
                                        const std::vector<Real>& confidences,
                                        AssocMemory& memory, const AssocParams& params,
                                        int frame_index);

/// EMA update of matched entries (then re-normalized) and retirement of
/// entries unseen for more than max_age frames.
void update_memory(AssocMemory& memory, const std::vector<Assignment>& assignments,
                   const std::vector<Vec>& projected, const AssocParams& params,
                   int frame_index);

}  // namespace tvis::assoc
