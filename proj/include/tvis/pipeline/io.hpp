#pragma once

#include "tvis/core/types.hpp"
#include "tvis/pipeline/model.hpp"
#include "tvis/refine/refiner.hpp"

#include <optional>
#include <string>
#include <vector>

namespace tvis::pipeline {

/// One serialized object: ground truth (track_id, no embedding), a simulated
/// detection (track_id + embedding), or a prediction (track_id + refined).
struct ObjectRecord {
  std::optional<int> track_id;
  BBox bbox;
  int class_id = 0;
  Real confidence = 1.0;
  Vec embedding;  // empty when absent
  BinaryMask mask;
  std::optional<bool> refined;
};

struct FrameRecord {
  std::string video_id;
  int frame_index = 0;
  std::vector<ObjectRecord> objects;
};

std::vector<FrameRecord> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<FrameRecord>& records);

/// Binary per-video feature sidecar (all frames).
void write_features(const std::string& path, const std::vector<refine::FeatureMap>& frames);
std::vector<refine::FeatureMap> read_features(const std::string& path);

/// Binary checkpoint of named tensors with shape headers; bit-exact.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

struct DatasetManifest {
  std::vector<std::string> train_videos;
  std::vector<std::string> eval_videos;
  int det_embed_dim = 16;
  int feature_dim = 8;
  int stride = 4;
  int canvas_h = 64;
  int canvas_w = 64;
  int num_classes = 2;
};

void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

}  // namespace tvis::pipeline
