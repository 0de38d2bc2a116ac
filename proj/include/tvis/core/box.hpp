#pragma once

#include "tvis/core/types.hpp"

namespace tvis {

Real bbox_iou(const BBox& a, const BBox& b);

/// Generalized IoU in [-1, 1]. Zero-area boxes are treated as points;
/// identical point boxes score 1, far-separated boxes approach -1.
Real bbox_giou(const BBox& a, const BBox& b);

/// Sum of absolute corner differences.
Real bbox_l1(const BBox& a, const BBox& b);

struct BBoxGrad {
  Real x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

/// GIoU and its partials w.r.t. the corners of `a` (piecewise gradient;
/// kinks where corners coincide get the one-sided value).
Real bbox_giou_grad(const BBox& a, const BBox& b, BBoxGrad& da);

Real bbox_l1_grad(const BBox& a, const BBox& b, BBoxGrad& da);

BBox clamp_box(const BBox& b);

}  // namespace tvis
