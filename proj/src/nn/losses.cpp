#include "tvis/nn/losses.hpp"

#include "tvis/core/mask.hpp"

#include <cmath>
#include <stdexcept>

namespace tvis::nn {

namespace {

Real clamp_prob(Real p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

void check_shapes(const Mat& pred, const MaskGrid& gt, const char* what) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols())
    throw std::invalid_argument(std::string(what) + ": prediction/target shape mismatch");
  if (pred.size() == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

}  // namespace

Real focal_loss(const ClassScores& scores, std::optional<int> target, Real gamma, Real alpha) {
  Vec unused;
  return focal_loss_grad(scores, target, gamma, alpha, unused);
}

Real focal_loss_grad(const ClassScores& scores, std::optional<int> target, Real gamma,
                     Real alpha, Vec& dscores) {
  if (gamma < 0) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  const Eigen::Index n = scores.scores.size();
  if (target && (*target < 0 || *target >= n))
    throw std::invalid_argument("focal_loss: target class out of range");
  if (dscores.size() != n) dscores = Vec::Zero(n);

  Real loss = 0;
  for (Eigen::Index c = 0; c < n; ++c) {
    const Real p = clamp_prob(scores.scores(c));
    const bool positive = target && *target == static_cast<int>(c);
    const Real pt = positive ? p : 1.0 - p;
    const Real mod = gamma == 0 ? 1.0 : std::pow(1.0 - pt, gamma);
    loss += -alpha * mod * std::log(pt);

    // d/dpt [-(1-pt)^g ln pt] = g (1-pt)^(g-1) ln pt - (1-pt)^g / pt
    Real dpt;
    if (gamma == 0) {
      dpt = -alpha / pt;
    } else {
      const Real mod1 = std::pow(1.0 - pt, gamma - 1.0);
      dpt = alpha * (gamma * mod1 * std::log(pt) - mod / pt);
    }
    dscores(c) += positive ? dpt : -dpt;
  }
  return loss;
}

Real dice_loss(const Mat& pred, const MaskGrid& gt) {
  check_shapes(pred, gt, "dice_loss");
  const Real pg = (pred.array() * gt.cast<Real>().array()).sum();
  const Real sp = pred.sum();
  const Real sg = gt.cast<Real>().sum();
  return 1.0 - (2.0 * pg + kProbEps) / (sp + sg + kProbEps);
}

Real dice_loss(const Mat& pred, const BinaryMask& gt) { return dice_loss(pred, rle_decode(gt)); }

Real dice_loss_grad(const Mat& pred, const MaskGrid& gt, Mat& dpred) {
  check_shapes(pred, gt, "dice_loss");
  if (dpred.rows() != pred.rows() || dpred.cols() != pred.cols())
    dpred = Mat::Zero(pred.rows(), pred.cols());
  const Mat g = gt.cast<Real>();
  const Real pg = (pred.array() * g.array()).sum();
  const Real denom = pred.sum() + g.sum() + kProbEps;
  const Real num = 2.0 * pg + kProbEps;
  dpred.array() += (num / (denom * denom)) - (2.0 / denom) * g.array();
  return 1.0 - num / denom;
}

Real bce_mask_loss(const Mat& pred, const MaskGrid& gt) {
  check_shapes(pred, gt, "bce_mask_loss");
  Real loss = 0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j)
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const Real p = clamp_prob(pred(i, j));
      loss += gt(i, j) ? -std::log(p) : -std::log(1.0 - p);
    }
  return loss / static_cast<Real>(pred.size());
}

Real bce_mask_loss(const Mat& pred, const BinaryMask& gt) {
  return bce_mask_loss(pred, rle_decode(gt));
}

Real bce_mask_loss_grad(const Mat& pred, const MaskGrid& gt, Mat& dpred) {
  check_shapes(pred, gt, "bce_mask_loss");
  if (dpred.rows() != pred.rows() || dpred.cols() != pred.cols())
    dpred = Mat::Zero(pred.rows(), pred.cols());
  const Real inv_n = 1.0 / static_cast<Real>(pred.size());
  Real loss = 0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j)
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const Real p = clamp_prob(pred(i, j));
      if (gt(i, j)) {
        loss += -std::log(p);
        dpred(i, j) += -inv_n / p;
      } else {
        loss += -std::log(1.0 - p);
        dpred(i, j) += inv_n / (1.0 - p);
      }
    }
  return loss * inv_n;
}

}  // namespace tvis::nn
