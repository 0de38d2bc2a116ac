#pragma once

#include "tvis/core/types.hpp"

namespace tvis::refine {

/// A tracklet's temporal window: one row per frame, zero rows where the
/// tracklet has no detection.
struct AssembledWindow {
  Mat embeddings;   // length x embed_dim
  IVec frame_indices;
  BoolArr zero_fill;  // true where the slot was filled with a zero embedding
  int track_id = -1;

  int length() const { return static_cast<int>(embeddings.rows()); }
};

/// Window of raw detection embeddings for frames [max(clip_start, t-W+1), t].
/// Missing tracklet frames become zero-fill slots; frames before the clip
/// start are truncated. Throws if the window contains no real detection.
AssembledWindow assemble_window(const Tracklet& tracklet, int frame, int window, int embed_dim,
                                int clip_start = 0);

}  // namespace tvis::refine
