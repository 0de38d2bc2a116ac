#pragma once

#include "tvis/core/types.hpp"

#include <optional>

namespace tvis::nn {

/// Probability clamp used by every log-based loss.
constexpr Real kProbEps = 1e-7;

/// Focal loss summed over classes. target == nullopt means all-background.
/// Every class term is weighted by alpha; the modulating factor is
/// (1 - p_t)^gamma with p_t the probability of the correct decision, so
/// gamma=0, alpha=1 reduces to plain binary cross-entropy.
Real focal_loss(const ClassScores& scores, std::optional<int> target, Real gamma, Real alpha);

/// Same value; accumulates d(loss)/d(scores) into dscores.
Real focal_loss_grad(const ClassScores& scores, std::optional<int> target, Real gamma,
                     Real alpha, Vec& dscores);

/// 1 - (2 p.g + eps) / (|p| + |g| + eps) over per-pixel probabilities.
Real dice_loss(const Mat& pred, const MaskGrid& gt);
Real dice_loss(const Mat& pred, const BinaryMask& gt);
Real dice_loss_grad(const Mat& pred, const MaskGrid& gt, Mat& dpred);

/// Mean per-pixel binary cross-entropy.
Real bce_mask_loss(const Mat& pred, const MaskGrid& gt);
Real bce_mask_loss(const Mat& pred, const BinaryMask& gt);
Real bce_mask_loss_grad(const Mat& pred, const MaskGrid& gt, Mat& dpred);

}  // namespace tvis::nn
