#pragma once

#include "tvis/core/types.hpp"
#include "tvis/refine/refiner.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tvis::synth {

struct SynthConfig {
  int frames = 24;
  int canvas_h = 64;
  int canvas_w = 64;
  int num_objects = 4;
  int num_classes = 2;       // class 0 rectangles, class 1 ellipses
  Real min_size = 14;
  Real max_size = 26;
  Real min_speed = 0.8;
  Real max_speed = 2.6;
  int det_embed_dim = 16;    // raw detector embedding width
  int feature_dim = 8;       // feature channels (channel 0 is constant 1)
  int stride = 4;

  // Detector noise model.
  Real theta_occ = 0.55;     // visible fraction below which drops may happen
  Real p_drop = 0.85;
  Real box_jitter = 0.02;
  Real mask_noise = 0.03;    // foreground pixel dropout probability
  Real embed_noise = 0.05;
  Real drift_rate = 0.01;    // appearance drift per frame
  Real conf_noise = 0.02;
  Real feature_noise = 0.15;
  Real clutter_rate = 0.0;   // expected spurious detections per frame
};

struct GtObject {
  int track_id = -1;
  int class_id = 0;
  BBox bbox;                  // tight box of the visible mask, normalized
  BinaryMask visible_mask;
  Real visible_fraction = 0;  // visible area / full shape area
};

struct GtFrame {
  std::vector<GtObject> objects;  // only objects with nonempty visible masks
};

struct SynthVideo {
  std::string video_id;
  int canvas_h = 0, canvas_w = 0;
  int num_classes = 2;
  std::vector<GtFrame> frames;
  std::vector<refine::FeatureMap> features;   // one per frame
  std::vector<Vec> track_base;                // per-track appearance vector
  std::vector<int> track_class;
};

/// Rectangles/ellipses moving linearly with wall bounce; occlusion resolved
/// by painter's order (higher track id on top). Deterministic given the seed.
SynthVideo generate_video(const SynthConfig& cfg, std::uint64_t seed,
                          const std::string& video_id);

struct SimDetection {
  int frame_index = 0;
  int source_track = -1;  // -1 for clutter
  int class_id = 0;
  BBox bbox;
  Real confidence = 0;
  BinaryMask mask;
  Vec embedding;  // det_embed_dim
};

/// Per visible ground-truth object: a jittered detection whose confidence
/// falls with occlusion. Objects with visible fraction below theta_occ are
/// dropped with probability p_drop; those frames are the recovery targets.
std::vector<std::vector<SimDetection>> simulate_detector(const SynthVideo& video,
                                                         const SynthConfig& cfg,
                                                         std::uint64_t seed);

/// Projection shared by every video that maps appearance vectors into the
/// feature channels; fixed so a single linear mask head transfers across
/// videos.
Mat appearance_projection(int feature_dim, int det_embed_dim);

/// Fixed per-class appearance prototypes shared across videos, orthonormal
/// and orthogonal to the appearance projection's row space.
Mat class_directions(int num_classes, int det_embed_dim, int feature_dim);

}  // namespace tvis::synth
