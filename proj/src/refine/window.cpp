#include "tvis/refine/window.hpp"

#include <stdexcept>

namespace tvis::refine {

AssembledWindow assemble_window(const Tracklet& tracklet, int frame, int window, int embed_dim,
                                int clip_start) {
  if (window < 1) throw std::invalid_argument("assemble_window: window must be >= 1");
  if (embed_dim <= 0) throw std::invalid_argument("assemble_window: embed_dim must be > 0");

  const int start = std::max(clip_start, frame - window + 1);
  const int len = frame - start + 1;
  if (len <= 0) throw std::invalid_argument("assemble_window: frame precedes clip start");

  AssembledWindow win;
  win.track_id = tracklet.track_id;
  win.embeddings = Mat::Zero(len, embed_dim);
  win.frame_indices.resize(len);
  win.zero_fill = BoolArr::Constant(len, true);

  bool any_real = false;
  for (int i = 0; i < len; ++i) {
    const int t = start + i;
    win.frame_indices(i) = t;
    auto it = tracklet.slots.find(t);
    if (it == tracklet.slots.end() || !it->second.detection) continue;
    const Vec& e = it->second.detection->embedding;
    if (e.size() != embed_dim)
      throw std::invalid_argument("assemble_window: embedding dimension mismatch");
    win.embeddings.row(i) = e.transpose();
    win.zero_fill(i) = false;
    any_real = true;
  }
  if (!any_real)
    throw std::runtime_error("assemble_window: window overlaps no detection of the tracklet");
  return win;
}

}  // namespace tvis::refine
