#include "tvis/refine/refiner.hpp"

#include "tvis/core/mask.hpp"
#include "tvis/nn/ops.hpp"

#include <stdexcept>

namespace tvis::refine {

Vec class_logits(const Vec& embedding, const RefineHeads& heads) {
  if (embedding.size() != heads.cls_w.cols())
    throw std::invalid_argument("class_logits: embedding dimension mismatch");
  return heads.cls_w * embedding + heads.cls_b;
}

ClassScores predict_class(const Vec& embedding, const RefineHeads& heads) {
  Vec z = class_logits(embedding, heads);
  ClassScores s;
  s.scores = (1.0 / (1.0 + (-z.array()).exp())).matrix();
  return s;
}

Mat predict_mask_probs(const Vec& embedding, const FeatureMap& features,
                       const RefineHeads& heads) {
  if (heads.kernel_w.rows() != features.channels())
    throw std::invalid_argument("predict_mask_probs: kernel/feature channel mismatch");
  Vec kernel = heads.kernel_w * embedding + heads.kernel_b;
  Vec logits = features.data.transpose() * kernel;  // one per pixel
  Mat probs(features.height, features.width);
  // pixel p = x*height + y matches column-major reshape
  Eigen::Map<Vec>(probs.data(), probs.size()) =
      (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  return probs;
}

Mat upsample_nearest(const Mat& coarse, int factor) {
  if (factor < 1) throw std::invalid_argument("upsample_nearest: factor must be >= 1");
  Mat fine(coarse.rows() * factor, coarse.cols() * factor);
  for (Eigen::Index j = 0; j < fine.cols(); ++j)
    for (Eigen::Index i = 0; i < fine.rows(); ++i) fine(i, j) = coarse(i / factor, j / factor);
  return fine;
}

MaskGrid binarize_mask(const Mat& probs) {
  MaskGrid grid(probs.rows(), probs.cols());
  for (Eigen::Index j = 0; j < probs.cols(); ++j)
    for (Eigen::Index i = 0; i < probs.rows(); ++i) grid(i, j) = probs(i, j) > 0.5 ? 1 : 0;
  return grid;
}

BinaryMask predict_mask(const Vec& embedding, const FeatureMap& features,
                        const RefineHeads& heads, int out_h, int out_w) {
  Mat probs = predict_mask_probs(embedding, features, heads);
  if (out_h % features.height != 0 || out_w % features.width != 0)
    throw std::invalid_argument("predict_mask: output must be a multiple of the feature grid");
  const int factor = out_h / features.height;
  if (factor != out_w / features.width)
    throw std::invalid_argument("predict_mask: anisotropic upsample factor");
  return rle_encode(binarize_mask(upsample_nearest(probs, factor)));
}

namespace {

bool window_has_detection(const Tracklet& t, int frame, int window, int clip_start) {
  const int start = std::max(clip_start, frame - window + 1);
  for (int f = start; f <= frame; ++f) {
    auto it = t.slots.find(f);
    if (it != t.slots.end() && it->second.detection) return true;
  }
  return false;
}

}  // namespace

void refine_tracklets_offline(std::vector<Tracklet>& tracklets, int window,
                              const nn::AttentionBlockParams& params, int clip_start) {
  if (window < 1) throw std::invalid_argument("refine_tracklets_offline: window must be >= 1");
  const int embed = params.embed_dim();
  for (Tracklet& t : tracklets) {
    if (t.empty()) continue;
    const int first = t.first_detection_frame();
    const int last = t.last_detection_frame();
    for (int frame = first; frame <= last; ++frame) {
      if (!window_has_detection(t, frame, window, clip_start)) continue;
      AssembledWindow win = assemble_window(t, frame, window, embed, clip_start);
      Mat refined = attention_block_forward(win.embeddings, win.frame_indices, BoolArr(),
                                            params, true);
      t.slots[frame].refined = Vec(refined.row(refined.rows() - 1).transpose());
    }
  }
}

Vec online_refine_slot(OnlineTrackState& state, int frame, const Vec* raw_embedding,
                       const nn::AttentionBlockParams& params, int window, bool feedback,
                       int embed_dim) {
  if (window < 1) throw std::invalid_argument("online_refine_slot: window must be >= 1");

  const Vec current = raw_embedding ? *raw_embedding : Vec(Vec::Zero(embed_dim));
  const int past = static_cast<int>(state.buffer.size());
  const int len = past + 1;
  Mat x(len, embed_dim);
  IVec frames(len);
  bool any_real = raw_embedding != nullptr;
  for (int i = 0; i < past; ++i) {
    frames(i) = state.buffer[i].first;
    x.row(i) = state.buffer[i].second.transpose();
    any_real = any_real || !state.buffer[i].second.isZero(0);
  }
  frames(len - 1) = frame;
  x.row(len - 1) = current.transpose();

  Vec refined;
  if (any_real) {
    Mat out = attention_block_forward(x, frames, BoolArr(), params, true);
    refined = out.row(len - 1).transpose();
  }

  const Vec stored = (feedback && refined.size() > 0) ? refined : current;
  state.buffer.emplace_back(frame, stored);
  while (static_cast<int>(state.buffer.size()) > window - 1) state.buffer.pop_front();
  return refined;  // empty when the whole window was zero-fill
}

}  // namespace tvis::refine
