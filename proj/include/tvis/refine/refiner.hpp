#pragma once

#include "tvis/core/types.hpp"
#include "tvis/nn/attention.hpp"
#include "tvis/refine/window.hpp"

#include <deque>
#include <map>

namespace tvis::refine {

/// Per-frame feature map, channels x (height*width); pixel p = x*height + y
/// (column-major, matching mask storage).
struct FeatureMap {
  int height = 0;
  int width = 0;
  Mat data;

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index pixel(int y, int x) const {
    return static_cast<Eigen::Index>(x) * height + y;
  }
};

/// Class head and mask-kernel head applied to (refined) object embeddings.
/// Shared with the frame-level model so disabled refinement reproduces
/// frame-level predictions exactly.
struct RefineHeads {
  Mat cls_w;     // num_classes x embed_dim
  Vec cls_b;
  Mat kernel_w;  // feature_dim x embed_dim
  Vec kernel_b;

  int num_classes() const { return static_cast<int>(cls_w.rows()); }
  int kernel_dim() const { return static_cast<int>(kernel_w.rows()); }
};

Vec class_logits(const Vec& embedding, const RefineHeads& heads);
ClassScores predict_class(const Vec& embedding, const RefineHeads& heads);

/// Per-pixel sigmoid of kernel . feature at the feature-map resolution.
Mat predict_mask_probs(const Vec& embedding, const FeatureMap& features,
                       const RefineHeads& heads);

Mat upsample_nearest(const Mat& coarse, int factor);

/// Probabilities above 0.5 become foreground (ties round down).
MaskGrid binarize_mask(const Mat& probs);

/// Stride-resolution prediction upsampled to out_h x out_w and thresholded.
BinaryMask predict_mask(const Vec& embedding, const FeatureMap& features,
                        const RefineHeads& heads, int out_h, int out_w);

/// Refines every frame of every tracklet between its first and last detection
/// with the causal window ending at that frame, all inputs raw. Fills
/// slot.refined (creating gap slots). Tracklets are independent of each other.
void refine_tracklets_offline(std::vector<Tracklet>& tracklets, int window,
                              const nn::AttentionBlockParams& params, int clip_start = 0);

/// Ring buffer of one tracklet's recent window inputs for online refinement.
struct OnlineTrackState {
  std::deque<std::pair<int, Vec>> buffer;  // (frame, stored embedding), length <= W-1
};

struct OnlineState {
  std::map<int, OnlineTrackState> tracks;
  int frame = -1;
};

/// Online refinement of one tracklet slot: window = buffered past entries plus
/// the current raw embedding (zero when the frame has no detection). With
/// feedback the refined embedding is stored for later windows, otherwise the
/// raw input is stored.
Vec online_refine_slot(OnlineTrackState& state, int frame, const Vec* raw_embedding,
                       const nn::AttentionBlockParams& params, int window, bool feedback,
                       int embed_dim);

using nn::attention_flop_count;

}  // namespace tvis::refine
