#include "tvis/pipeline/infer.hpp"

#include "tvis/core/mask.hpp"
#include "tvis/nn/ops.hpp"

#include <algorithm>
#include <stdexcept>

namespace tvis::pipeline {

namespace {

BBox mask_tight_box(const BinaryMask& mask) {
  MaskGrid grid = rle_decode(mask);
  int rmin = -1, rmax = -1, cmin = -1, cmax = -1;
  for (int c = 0; c < grid.cols(); ++c)
    for (int r = 0; r < grid.rows(); ++r)
      if (grid(r, c)) {
        if (rmin < 0 || r < rmin) rmin = r;
        if (r > rmax) rmax = r;
        if (cmin < 0 || c < cmin) cmin = c;
        if (c > cmax) cmax = c;
      }
  BBox b;
  if (rmin < 0) return b;
  b.x1 = static_cast<Real>(cmin) / grid.cols();
  b.x2 = static_cast<Real>(cmax + 1) / grid.cols();
  b.y1 = static_cast<Real>(rmin) / grid.rows();
  b.y2 = static_cast<Real>(rmax + 1) / grid.rows();
  return b;
}

}  // namespace

InferOutputs run_inference(const Model& model, const VideoData& video,
                           const InferOptions& opts) {
  if (opts.mode != "online" && opts.mode != "offline")
    throw std::invalid_argument("run_inference: mode must be 'online' or 'offline'");
  const int T = video.length();
  const int embed = model.dims.embed_dim;

  // Encoded feature maps per frame, for the mask head.
  std::vector<refine::FeatureMap> feats(T);
  for (int t = 0; t < T; ++t) {
    feats[t].height = video.frames[t].features.height;
    feats[t].width = video.frames[t].features.width;
    feats[t].data = (model.feat_w * video.frames[t].features.data).colwise() + model.feat_b;
  }

  // --- Association pass (always online) ---------------------------------
  assoc::AssocMemory memory;
  std::map<int, Tracklet> tracklets;
  refine::OnlineState online;
  InferOutputs out;
  const bool online_mode = opts.mode == "online" && opts.window >= 1;

  for (int t = 0; t < T; ++t) {
    const VideoFrame& frame = video.frames[t];
    const int n = static_cast<int>(frame.det_track.size());
    Mat e = n > 0 ? Mat(nn::linear(frame.det_raw, model.enc_w, model.enc_b))
                  : Mat(0, embed);

    std::vector<Vec> projected(n);
    std::vector<Real> conf(n);
    for (int i = 0; i < n; ++i) {
      projected[i] = assoc::project_contrastive(e.row(i).transpose(), model.contrastive);
      conf[i] = frame.det_conf[i];
    }
    auto assignments = assoc::associate_frame(projected, conf, memory, opts.assoc, t);
    assoc::update_memory(memory, assignments, projected, opts.assoc, t);

    std::map<int, int> det_of_track;  // track -> detection index this frame
    for (const auto& a : assignments) {
      if (a.track_id < 0) continue;
      det_of_track[a.track_id] = a.det_index;
      Tracklet& tr = tracklets[a.track_id];
      tr.track_id = a.track_id;
      FrameDetection det;
      det.frame_index = t;
      det.bbox = frame.det_box[a.det_index];
      det.confidence = frame.det_conf[a.det_index];
      det.mask = frame.det_mask[a.det_index];
      det.embedding = e.row(a.det_index).transpose();
      det.class_scores = refine::predict_class(det.embedding, model.heads);
      det.source_track = frame.det_track[a.det_index];
      tr.slots[t].detection = std::move(det);
    }

    if (online_mode) {
      // Every live tracklet is refined each frame; unmatched ones feed a
      // zero embedding so context can still recover the object.
      for (const auto& entry : memory.entries) {
        const int id = entry.track_id;
        auto dit = det_of_track.find(id);
        Vec raw;
        const Vec* raw_ptr = nullptr;
        if (dit != det_of_track.end()) {
          raw = tracklets[id].slots[t].detection->embedding;
          raw_ptr = &raw;
        }
        Vec refined = refine::online_refine_slot(online.tracks[id], t, raw_ptr, model.attn,
                                                 opts.window, opts.feedback, embed);
        if (refined.size() > 0) out.refined[{id, t}] = refined;
      }
      // Drop buffers of retired tracklets.
      for (auto it = online.tracks.begin(); it != online.tracks.end();) {
        if (memory.find(it->first) == nullptr)
          it = online.tracks.erase(it);
        else
          ++it;
      }
    }
  }

  std::vector<Tracklet> track_list;
  for (auto& [id, tr] : tracklets) track_list.push_back(std::move(tr));

  // --- Refinement --------------------------------------------------------
  if (opts.window >= 1 && opts.mode == "offline") {
    refine::refine_tracklets_offline(track_list, opts.window, model.attn, 0);
    for (const Tracklet& tr : track_list)
      for (const auto& [t, slot] : tr.slots)
        if (slot.refined) out.refined[{tr.track_id, t}] = *slot.refined;
  }

  // --- Emit per-track predictions ----------------------------------------
  const bool refinement_on = opts.window >= 1;
  std::vector<FrameRecord> records(T);
  for (int t = 0; t < T; ++t) {
    records[t].video_id = video.video_id;
    records[t].frame_index = t;
  }

  for (const Tracklet& tr : track_list) {
    // Per-frame embeddings driving the heads.
    std::map<int, Vec> emb;
    if (refinement_on) {
      for (const auto& [key, value] : out.refined)
        if (key.first == tr.track_id) emb[key.second] = value;
    } else {
      for (const auto& [t, slot] : tr.slots)
        if (slot.detection) emb[t] = slot.detection->embedding;
    }
    if (emb.empty()) continue;

    // Track-level class/confidence aggregate over frames with detections, so
    // zero-weight refinement reproduces frame-level predictions exactly.
    Vec mean_scores = Vec::Zero(model.dims.num_classes);
    int agg_count = 0;
    for (const auto& [t, e] : emb) {
      auto slot = tr.slots.find(t);
      if (slot == tr.slots.end() || !slot->second.detection) continue;
      mean_scores += refine::predict_class(e, model.heads).scores;
      ++agg_count;
    }
    if (agg_count == 0) continue;
    mean_scores /= static_cast<Real>(agg_count);
    Eigen::Index cls = 0;
    const Real track_conf = mean_scores.maxCoeff(&cls);
    if (track_conf < opts.conf_floor) continue;

    for (const auto& [t, e] : emb) {
      BinaryMask mask =
          refine::predict_mask(e, feats[t], model.heads, video.canvas_h, video.canvas_w);
      if (mask.empty_mask()) continue;  // empty prediction = absent this frame
      ObjectRecord rec;
      rec.track_id = tr.track_id;
      rec.class_id = static_cast<int>(cls);
      rec.confidence = track_conf;
      rec.mask = std::move(mask);
      auto slot = tr.slots.find(t);
      rec.bbox = (slot != tr.slots.end() && slot->second.detection)
                     ? slot->second.detection->bbox
                     : mask_tight_box(rec.mask);
      rec.refined = refinement_on;
      records[t].objects.push_back(std::move(rec));
    }
  }

  out.records = std::move(records);
  out.tracklets = std::move(track_list);
  return out;
}

}  // namespace tvis::pipeline
