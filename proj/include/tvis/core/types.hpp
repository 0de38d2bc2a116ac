#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace tvis {

using Real = double;
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
using IVec = Eigen::VectorXi;
using BoolArr = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Binary pixel grid, H x W. Column-major storage matches the RLE order.
using MaskGrid = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Run-length encoded binary mask. Counts are column-major and alternate
/// zero-run / one-run, always starting with the zero-run (which may be 0).
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint32_t> counts;

  bool empty_mask() const;          // no foreground pixel
  std::int64_t area() const;        // number of foreground pixels
  std::int64_t size() const { return static_cast<std::int64_t>(height) * width; }
};

/// Axis-aligned box with corners normalized to [0,1], x1 <= x2, y1 <= y2.
struct BBox {
  Real x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  Real area() const { return (x2 - x1) * (y2 - y1); }
};

/// Per-class sigmoid probabilities; not required to sum to 1.
struct ClassScores {
  Vec scores;

  int num_classes() const { return static_cast<int>(scores.size()); }
  int argmax() const;
};

/// One frame-level object: geometry, scores, mask, and its object embedding.
struct FrameDetection {
  int frame_index = 0;
  BBox bbox;
  ClassScores class_scores;
  BinaryMask mask;
  Real confidence = 0;
  Vec embedding;      // object embedding, dimension C_E
  int source_track = -1;  // ground-truth identity when known (training data), else -1
};

struct TrackletSlot {
  std::optional<FrameDetection> detection;
  std::optional<Vec> refined;  // refined embedding, filled by the refiner
};

/// Ordered per-frame slots for one object identity. Gaps are frames with no slot.
struct Tracklet {
  int track_id = -1;
  std::map<int, TrackletSlot> slots;

  bool empty() const { return slots.empty(); }
  int first_frame() const;
  int last_frame() const;
  // First/last frame carrying an actual detection (slots may be refiner-only).
  int first_detection_frame() const;
  int last_detection_frame() const;
};

}  // namespace tvis
