#include "tvis/core/box.hpp"

#include <algorithm>
#include <cmath>

namespace tvis {

namespace {
constexpr Real kAreaEps = 1e-12;
}

Real bbox_iou(const BBox& a, const BBox& b) {
  const Real iw = std::max<Real>(0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const Real ih = std::max<Real>(0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const Real inter = iw * ih;
  const Real uni = a.area() + b.area() - inter;
  if (uni <= kAreaEps) return 0;
  return inter / uni;
}

Real bbox_giou(const BBox& a, const BBox& b) {
  BBoxGrad unused;
  return bbox_giou_grad(a, b, unused);
}

Real bbox_l1(const BBox& a, const BBox& b) {
  return std::abs(a.x1 - b.x1) + std::abs(a.y1 - b.y1) + std::abs(a.x2 - b.x2) +
         std::abs(a.y2 - b.y2);
}

Real bbox_l1_grad(const BBox& a, const BBox& b, BBoxGrad& da) {
  auto sgn = [](Real d) -> Real { return d > 0 ? 1 : (d < 0 ? -1 : 0); };
  da.x1 = sgn(a.x1 - b.x1);
  da.y1 = sgn(a.y1 - b.y1);
  da.x2 = sgn(a.x2 - b.x2);
  da.y2 = sgn(a.y2 - b.y2);
  return bbox_l1(a, b);
}

Real bbox_giou_grad(const BBox& a, const BBox& b, BBoxGrad& da) {
  da = BBoxGrad{};

  const Real iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const Real ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const bool overlap = iw > 0 && ih > 0;
  const Real inter = overlap ? iw * ih : 0;

  const Real aw = a.x2 - a.x1, ah = a.y2 - a.y1;
  const Real area_a = aw * ah;
  const Real uni = area_a + b.area() - inter;

  const Real cw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  const Real ch = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  const Real enclosing = cw * ch;

  if (enclosing <= kAreaEps) return 1.0;  // identical point boxes

  // Partials of intersection, own area, and enclosing area w.r.t. a's corners.
  BBoxGrad dI, dA, dC;
  if (overlap) {
    dI.x1 = (a.x1 > b.x1) ? -ih : 0;
    dI.x2 = (a.x2 < b.x2) ? ih : 0;
    dI.y1 = (a.y1 > b.y1) ? -iw : 0;
    dI.y2 = (a.y2 < b.y2) ? iw : 0;
  }
  dA.x1 = -ah;
  dA.x2 = ah;
  dA.y1 = -aw;
  dA.y2 = aw;
  dC.x1 = (a.x1 < b.x1) ? -ch : 0;
  dC.x2 = (a.x2 > b.x2) ? ch : 0;
  dC.y1 = (a.y1 < b.y1) ? -cw : 0;
  dC.y2 = (a.y2 > b.y2) ? cw : 0;

  Real iou = 0;
  BBoxGrad diou;
  if (uni > kAreaEps) {
    iou = inter / uni;
    const Real inv_u2 = 1.0 / (uni * uni);
    auto d = [&](Real di, Real dA_c) { return (di * uni - inter * (dA_c - di)) * inv_u2; };
    diou.x1 = d(dI.x1, dA.x1);
    diou.x2 = d(dI.x2, dA.x2);
    diou.y1 = d(dI.y1, dA.y1);
    diou.y2 = d(dI.y2, dA.y2);
  }

  // giou = iou - (C - U)/C = iou - 1 + U/C
  const Real giou = iou - (enclosing - uni) / enclosing;
  const Real inv_c2 = 1.0 / (enclosing * enclosing);
  auto dterm = [&](Real dU_c, Real dC_c) { return (dU_c * enclosing - uni * dC_c) * inv_c2; };
  da.x1 = diou.x1 + dterm(dA.x1 - dI.x1, dC.x1);
  da.x2 = diou.x2 + dterm(dA.x2 - dI.x2, dC.x2);
  da.y1 = diou.y1 + dterm(dA.y1 - dI.y1, dC.y1);
  da.y2 = diou.y2 + dterm(dA.y2 - dI.y2, dC.y2);
  return giou;
}

BBox clamp_box(const BBox& b) {
  BBox r;
  r.x1 = std::clamp<Real>(b.x1, 0, 1);
  r.y1 = std::clamp<Real>(b.y1, 0, 1);
  r.x2 = std::clamp<Real>(b.x2, r.x1, 1);
  r.y2 = std::clamp<Real>(b.y2, r.y1, 1);
  return r;
}

}  // namespace tvis
