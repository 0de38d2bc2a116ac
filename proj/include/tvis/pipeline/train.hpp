#pragma once

#include "tvis/cdn/cdn.hpp"
#include "tvis/pipeline/io.hpp"
#include "tvis/pipeline/model.hpp"
#include "tvis/refine/refiner.hpp"

#include <random>
#include <string>
#include <vector>

namespace tvis::pipeline {

/// One ground-truth object prepared for training: targets at the mask-head
/// (stride) resolution.
struct GtObjectView {
  int track_id = -1;
  int class_id = 0;
  BBox bbox;
  MaskGrid coarse_mask;  // stride-resolution binary target
  BinaryMask full_mask;
  Vec appearance;        // clean per-track appearance vector (for CDN queries)
};

struct VideoFrame {
  int frame_index = 0;
  std::vector<GtObjectView> gt;
  std::vector<int> det_track;   // source track per detection, -1 for clutter
  std::vector<Real> det_conf;
  std::vector<BBox> det_box;
  std::vector<BinaryMask> det_mask;
  Mat det_raw;                  // num_dets x det_embed_dim
  refine::FeatureMap features;
};

struct VideoData {
  std::string video_id;
  int canvas_h = 0, canvas_w = 0;
  std::vector<VideoFrame> frames;

  int length() const { return static_cast<int>(frames.size()); }
};

struct FrameLosses {
  Real cls = 0, box = 0, mask = 0;

  Real sum() const { return cls + box + mask; }
};

struct LossWeights {
  Real w_frame = 1.0, w_assoc = 1.0, w_refine = 1.0;
  Real w_focal = 2.0, w_bce = 5.0, w_dice = 5.0, w_l1 = 5.0, w_giou = 2.0;
  Real focal_gamma = 2.0, focal_alpha = 0.25;
};

struct TrainSettings {
  AdamConfig adam;
  int steps = 2000;
  std::uint64_t seed = 7;
  int max_frame_gap = 10;
  LossWeights weights;
  cdn::NoiseConfig cdn;
  bool enable_frame_cdn = true;
  /// Probability of adding a window whose past slot is the (stop-gradient)
  /// refined embedding, matching what online inference feeds back.
  Real feedback_exposure = 0.5;
};

struct StepReport {
  FrameLosses frame;
  Real assoc = 0;
  Real refine = 0;
  Real total = 0;
};

/// Uniform over ordered pairs (key, ref) with key != ref and
/// |key - ref| <= max_gap; a single-frame video yields (0, 0).
std::pair<int, int> sample_frame_pair(int video_length, int max_gap, std::mt19937_64& rng);

/// w_frame * (cls + box + mask) + w_assoc * assoc + w_refine * refine.
/// Throws (naming the component) when any term is non-finite.
Real total_loss(const FrameLosses& frame, Real assoc, Real refine, const LossWeights& w);

/// One optimizer step on a sampled frame pair. Frame-level losses are charged
/// on the key frame only; association and refinement losses span both frames
/// and back-propagate into the encoders for both.
StepReport train_step(Model& model, AdamState& opt, const VideoData& video, int key_frame,
                      int ref_frame, const TrainSettings& cfg, std::uint64_t step_seed);

struct TrainResult {
  Model model;
  std::vector<StepReport> history;
};

TrainResult train_model(const std::vector<VideoData>& videos, const ModelDims& dims,
                        const TrainSettings& cfg);

/// Loads one split of a generated dataset (gt + detections + features).
std::vector<VideoData> load_videos(const std::string& data_dir, const DatasetManifest& manifest,
                                   bool eval_split);

MaskGrid downsample_majority(const MaskGrid& full, int stride);

}  // namespace tvis::pipeline

namespace tvis::synth {
struct SynthVideo;
struct SimDetection;
}  // namespace tvis::synth

namespace tvis::pipeline {

/// In-memory conversion of a generated video + simulated detections.
VideoData make_video_data(const synth::SynthVideo& video,
                          const std::vector<std::vector<synth::SimDetection>>& detections,
                          int stride);

}  // namespace tvis::pipeline
