#include "tvis/core/mask.hpp"

#include <numeric>
#include <stdexcept>

namespace tvis {

bool BinaryMask::empty_mask() const { return area() == 0; }

std::int64_t BinaryMask::area() const {
  std::int64_t a = 0;
  for (std::size_t i = 1; i < counts.size(); i += 2) a += counts[i];
  return a;
}

int ClassScores::argmax() const {
  Eigen::Index idx = 0;
  scores.maxCoeff(&idx);
  return static_cast<int>(idx);
}

int Tracklet::first_frame() const {
  if (slots.empty()) throw std::runtime_error("Tracklet::first_frame: empty tracklet");
  return slots.begin()->first;
}

int Tracklet::last_frame() const {
  if (slots.empty()) throw std::runtime_error("Tracklet::last_frame: empty tracklet");
  return slots.rbegin()->first;
}

int Tracklet::first_detection_frame() const {
  for (const auto& [t, slot] : slots)
    if (slot.detection) return t;
  throw std::runtime_error("Tracklet: no detection slots");
}

int Tracklet::last_detection_frame() const {
  for (auto it = slots.rbegin(); it != slots.rend(); ++it)
    if (it->second.detection) return it->first;
  throw std::runtime_error("Tracklet: no detection slots");
}

BinaryMask rle_encode(const MaskGrid& grid) {
  if (grid.rows() <= 0 || grid.cols() <= 0)
    throw std::invalid_argument("rle_encode: grid dimensions must be positive");

  BinaryMask mask;
  mask.height = static_cast<int>(grid.rows());
  mask.width = static_cast<int>(grid.cols());

  // Column-major grids store pixels in exactly the run order.
  const std::uint8_t* p = grid.data();
  const std::int64_t n = grid.size();
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint8_t v = p[i] ? 1 : 0;
    if (v == current) {
      ++run;
    } else {
      mask.counts.push_back(run);
      current = v;
      run = 1;
    }
  }
  mask.counts.push_back(run);
  return mask;
}

void validate_mask(const BinaryMask& mask) {
  if (mask.height <= 0 || mask.width <= 0)
    throw std::runtime_error("BinaryMask: dimensions must be positive");
  std::int64_t total = 0;
  for (std::uint32_t c : mask.counts) total += c;
  if (total != mask.size())
    throw std::runtime_error("BinaryMask: run lengths do not cover height*width");
}

MaskGrid rle_decode(const BinaryMask& mask) {
  validate_mask(mask);
  MaskGrid grid(mask.height, mask.width);
  std::uint8_t* p = grid.data();
  std::uint8_t value = 0;
  std::int64_t pos = 0;
  for (std::uint32_t c : mask.counts) {
    for (std::uint32_t k = 0; k < c; ++k) p[pos++] = value;
    value = 1 - value;
  }
  return grid;
}

std::int64_t mask_intersection(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("mask_intersection: dimension mismatch");
  // Walk both run lists in lockstep; runs partition the same pixel range.
  std::int64_t inter = 0;
  std::size_t ia = 0, ib = 0;
  std::int64_t ra = ia < a.counts.size() ? a.counts[ia] : 0;
  std::int64_t rb = ib < b.counts.size() ? b.counts[ib] : 0;
  bool va = false, vb = false;
  std::int64_t remaining = a.size();
  while (remaining > 0) {
    while (ra == 0 && ia + 1 < a.counts.size()) {
      ++ia;
      ra = a.counts[ia];
      va = !va;
    }
    while (rb == 0 && ib + 1 < b.counts.size()) {
      ++ib;
      rb = b.counts[ib];
      vb = !vb;
    }
    const std::int64_t step = std::min(ra, rb);
    if (step <= 0) throw std::runtime_error("mask_intersection: malformed run lengths");
    if (va && vb) inter += step;
    ra -= step;
    rb -= step;
    remaining -= step;
  }
  return inter;
}

Real mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("mask_iou: dimension mismatch");
  const std::int64_t inter = mask_intersection(a, b);
  const std::int64_t uni = a.area() + b.area() - inter;
  if (uni == 0) return 1.0;  // both empty
  return static_cast<Real>(inter) / static_cast<Real>(uni);
}

BinaryMask empty_mask(int height, int width) {
  BinaryMask m;
  m.height = height;
  m.width = width;
  m.counts = {static_cast<std::uint32_t>(static_cast<std::int64_t>(height) * width)};
  return m;
}

}  // namespace tvis
