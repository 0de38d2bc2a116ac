#pragma once

#include "tvis/core/types.hpp"

namespace tvis {

/// Encode a binary grid as column-major run lengths (leading zero-run form).
BinaryMask rle_encode(const MaskGrid& grid);

/// Inverse of rle_encode. Throws std::runtime_error on malformed counts.
MaskGrid rle_decode(const BinaryMask& mask);

void validate_mask(const BinaryMask& mask);

std::int64_t mask_intersection(const BinaryMask& a, const BinaryMask& b);

/// |a ∩ b| / |a ∪ b|. Two empty masks have IoU 1 so that correctly
/// predicting absence scores as a match.
Real mask_iou(const BinaryMask& a, const BinaryMask& b);

BinaryMask empty_mask(int height, int width);

}  // namespace tvis
