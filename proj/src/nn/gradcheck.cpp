#include "tvis/nn/gradcheck.hpp"

#include "tvis/assoc/contrastive.hpp"
#include "tvis/core/box.hpp"
#include "tvis/nn/attention.hpp"
#include "tvis/nn/losses.hpp"
#include "tvis/nn/ops.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace tvis::nn {

namespace {

constexpr Real kStep = 1e-5;

Real central_diff(const std::function<Real()>& f, Real& x) {
  const Real saved = x;
  x = saved + kStep;
  const Real plus = f();
  x = saved - kStep;
  const Real minus = f();
  x = saved;
  return (plus - minus) / (2.0 * kStep);
}

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, Real scale = 1.0) {
  std::normal_distribution<Real> g(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

Vec random_vec(Eigen::Index n, std::mt19937_64& rng, Real scale = 1.0) {
  return random_mat(n, 1, rng, scale).col(0);
}

Vec sigmoid_vec(const Vec& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

void track(GradCheckResult& res, Real analytic, Real numeric) {
  res.max_rel_err = std::max(res.max_rel_err, gradcheck_rel_err(analytic, numeric));
  ++res.entries_checked;
}

// --- attention block: params and inputs against <upstream, forward> --------
void check_attention(GradCheckResult& res, std::mt19937_64& rng) {
  const AttentionDims dims{8, 2, 12};
  AttentionBlockParams params = AttentionBlockParams::random(dims, rng);
  params.ln1_gamma = random_vec(8, rng, 0.3).array() + 1.0;
  params.ln2_gamma = random_vec(8, rng, 0.3).array() + 1.0;
  params.ln1_beta = random_vec(8, rng, 0.3);
  params.ln2_beta = random_vec(8, rng, 0.3);
  params.bq = random_vec(8, rng, 0.3);
  params.bk = random_vec(8, rng, 0.3);
  params.bv = random_vec(8, rng, 0.3);
  params.bo = random_vec(8, rng, 0.3);
  params.b1 = random_vec(12, rng, 0.3);
  params.b2 = random_vec(8, rng, 0.3);

  const int wlen = 3;
  Mat x = random_mat(wlen, 8, rng);
  IVec frames(wlen);
  frames << 2, 3, 5;
  const Mat upstream = random_mat(wlen, 8, rng);

  auto loss = [&]() {
    return (upstream.array() * attention_block_forward(x, frames, BoolArr(), params).array())
        .sum();
  };
  AttentionBlockGrads g = attention_block_gradients(x, frames, BoolArr(), params, upstream);

  auto check_tensor = [&](Real* data, const Real* grad, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Real& entry = data[i];
      track(res, grad[i], central_diff(loss, entry));
    }
  };
  check_tensor(x.data(), g.x.data(), x.size());
  check_tensor(params.wq.data(), g.params.wq.data(), params.wq.size());
  check_tensor(params.wk.data(), g.params.wk.data(), params.wk.size());
  check_tensor(params.wv.data(), g.params.wv.data(), params.wv.size());
  check_tensor(params.wo.data(), g.params.wo.data(), params.wo.size());
  check_tensor(params.bq.data(), g.params.bq.data(), params.bq.size());
  check_tensor(params.bk.data(), g.params.bk.data(), params.bk.size());
  check_tensor(params.bv.data(), g.params.bv.data(), params.bv.size());
  check_tensor(params.bo.data(), g.params.bo.data(), params.bo.size());
  check_tensor(params.w1.data(), g.params.w1.data(), params.w1.size());
  check_tensor(params.b1.data(), g.params.b1.data(), params.b1.size());
  check_tensor(params.w2.data(), g.params.w2.data(), params.w2.size());
  check_tensor(params.b2.data(), g.params.b2.data(), params.b2.size());
  check_tensor(params.ln1_gamma.data(), g.params.ln1_gamma.data(), params.ln1_gamma.size());
  check_tensor(params.ln1_beta.data(), g.params.ln1_beta.data(), params.ln1_beta.size());
  check_tensor(params.ln2_gamma.data(), g.params.ln2_gamma.data(), params.ln2_gamma.size());
  check_tensor(params.ln2_beta.data(), g.params.ln2_beta.data(), params.ln2_beta.size());
}

// --- class head through focal loss -----------------------------------------
void check_class_head(GradCheckResult& res, std::mt19937_64& rng) {
  const int embed = 8, classes = 3;
  Mat w = random_mat(classes, embed, rng, 0.5);
  Vec b = random_vec(classes, rng, 0.2);
  Vec e = random_vec(embed, rng);
  std::uniform_int_distribution<int> pick(-1, classes - 1);
  const int target = pick(rng);
  const Real gamma = 2.0, alpha = 0.25;

  auto loss = [&]() {
    ClassScores s;
    s.scores = sigmoid_vec(w * e + b);
    return focal_loss(s, target < 0 ? std::nullopt : std::optional<int>(target), gamma, alpha);
  };

  ClassScores s;
  s.scores = sigmoid_vec(w * e + b);
  Vec dp = Vec::Zero(classes);
  focal_loss_grad(s, target < 0 ? std::nullopt : std::optional<int>(target), gamma, alpha, dp);
  Vec dz = (dp.array() * s.scores.array() * (1.0 - s.scores.array())).matrix();
  Mat dw = dz * e.transpose();
  Vec db = dz;
  Vec de = w.transpose() * dz;

  for (Eigen::Index i = 0; i < w.size(); ++i) track(res, dw.data()[i], central_diff(loss, w.data()[i]));
  for (Eigen::Index i = 0; i < b.size(); ++i) track(res, db(i), central_diff(loss, b(i)));
  for (Eigen::Index i = 0; i < e.size(); ++i) track(res, de(i), central_diff(loss, e(i)));
}

// --- kernel head through bce + dice -----------------------------------------
void check_mask_head(GradCheckResult& res, std::mt19937_64& rng) {
  const int embed = 6, channels = 4, h = 5, w_ = 4;
  Mat kw = random_mat(channels, embed, rng, 0.5);
  Vec kb = random_vec(channels, rng, 0.2);
  Vec e = random_vec(embed, rng);
  Mat feat = random_mat(channels, h * w_, rng);
  MaskGrid gt(h, w_);
  std::uniform_int_distribution<int> bit(0, 1);
  for (Eigen::Index j = 0; j < gt.cols(); ++j)
    for (Eigen::Index i = 0; i < gt.rows(); ++i) gt(i, j) = static_cast<std::uint8_t>(bit(rng));

  auto loss = [&]() {
    Vec kernel = kw * e + kb;
    Vec probs_flat = sigmoid_vec(feat.transpose() * kernel);
    Mat probs = Eigen::Map<Mat>(probs_flat.data(), h, w_);
    return bce_mask_loss(probs, gt) + dice_loss(probs, gt);
  };

  Vec kernel = kw * e + kb;
  Vec probs_flat = sigmoid_vec(feat.transpose() * kernel);
  Mat probs = Eigen::Map<Mat>(probs_flat.data(), h, w_);
  Mat dprobs = Mat::Zero(h, w_);
  bce_mask_loss_grad(probs, gt, dprobs);
  Mat dprobs_dice = Mat::Zero(h, w_);
  dice_loss_grad(probs, gt, dprobs_dice);
  dprobs += dprobs_dice;
  Vec dlogits = (Eigen::Map<Vec>(dprobs.data(), dprobs.size()).array() * probs_flat.array() *
                 (1.0 - probs_flat.array()))
                    .matrix();
  Vec dkernel = feat * dlogits;
  Mat dkw = dkernel * e.transpose();
  Vec de = kw.transpose() * dkernel;

  for (Eigen::Index i = 0; i < kw.size(); ++i)
    track(res, dkw.data()[i], central_diff(loss, kw.data()[i]));
  for (Eigen::Index i = 0; i < kb.size(); ++i)
    track(res, dkernel(i), central_diff(loss, kb(i)));
  for (Eigen::Index i = 0; i < e.size(); ++i) track(res, de(i), central_diff(loss, e(i)));
  // Also check d(loss)/d(features) since the feature encoder trains on it.
  Mat dfeat = kernel * dlogits.transpose();
  for (Eigen::Index i = 0; i < std::min<Eigen::Index>(feat.size(), 20); ++i)
    track(res, dfeat.data()[i], central_diff(loss, feat.data()[i]));
}

// --- box head through L1 + GIoU ---------------------------------------------
void check_box_head(GradCheckResult& res, std::mt19937_64& rng) {
  std::uniform_real_distribution<Real> u(0.1, 0.9);
  BBox gt;
  Vec z;
  BBox pred;
  // keep clear of the min/max kinks of the piecewise gradient
  auto corners_ok = [&](const BBox& a, const BBox& b) {
    const Real m = 5e-3;
    return std::abs(a.x1 - b.x1) > m && std::abs(a.x2 - b.x2) > m &&
           std::abs(a.y1 - b.y1) > m && std::abs(a.y2 - b.y2) > m;
  };
  do {
    Real x1 = u(rng), x2 = u(rng), y1 = u(rng), y2 = u(rng);
    gt = {std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2)};
    z = random_vec(4, rng, 0.8);
    Vec s = sigmoid_vec(z);
    pred = {s(0) - s(2) / 2, s(1) - s(3) / 2, s(0) + s(2) / 2, s(1) + s(3) / 2};
  } while (!corners_ok(pred, gt));

  auto loss = [&]() {
    Vec s = sigmoid_vec(z);
    BBox a{s(0) - s(2) / 2, s(1) - s(3) / 2, s(0) + s(2) / 2, s(1) + s(3) / 2};
    return bbox_l1(a, gt) + (1.0 - bbox_giou(a, gt));
  };

  Vec s = sigmoid_vec(z);
  BBox a{s(0) - s(2) / 2, s(1) - s(3) / 2, s(0) + s(2) / 2, s(1) + s(3) / 2};
  BBoxGrad dl1, dgiou;
  bbox_l1_grad(a, gt, dl1);
  bbox_giou_grad(a, gt, dgiou);
  BBoxGrad da{dl1.x1 - dgiou.x1, dl1.y1 - dgiou.y1, dl1.x2 - dgiou.x2, dl1.y2 - dgiou.y2};
  Vec ds(4);
  ds(0) = da.x1 + da.x2;
  ds(1) = da.y1 + da.y2;
  ds(2) = 0.5 * (da.x2 - da.x1);
  ds(3) = 0.5 * (da.y2 - da.y1);
  Vec dz = (ds.array() * s.array() * (1.0 - s.array())).matrix();
  for (int i = 0; i < 4; ++i) track(res, dz(i), central_diff(loss, z(i)));
}

// --- contrastive loss through projection + normalization --------------------
void check_contrastive(GradCheckResult& res, std::mt19937_64& rng) {
  const int embed = 6, cdim = 4;
  assoc::ContrastiveHead head{random_mat(cdim, embed, rng, 0.6)};
  Vec anchor_e = random_vec(embed, rng);
  std::vector<Vec> ref_e = {random_vec(embed, rng), random_vec(embed, rng),
                            random_vec(embed, rng)};
  assoc::PairSet pairs;
  pairs.anchor = 0;
  pairs.positives = {0};
  pairs.negatives = {1, 2};

  auto loss = [&]() {
    Vec v = assoc::project_contrastive(anchor_e, head);
    std::vector<Vec> ks;
    for (const Vec& e : ref_e) ks.push_back(assoc::project_contrastive(e, head));
    return assoc::contrastive_loss(v, pairs, ks);
  };

  Vec v = assoc::project_contrastive(anchor_e, head);
  std::vector<Vec> ks;
  for (const Vec& e : ref_e) ks.push_back(assoc::project_contrastive(e, head));
  Vec dv = Vec::Zero(cdim);
  std::vector<Vec> dks;
  assoc::contrastive_loss_grad(v, pairs, ks, dv, dks);
  Mat dw = Mat::Zero(cdim, embed);
  Vec danchor = assoc::project_contrastive_backward(anchor_e, head, dv, dw);
  std::vector<Vec> dref;
  for (std::size_t i = 0; i < ref_e.size(); ++i)
    dref.push_back(assoc::project_contrastive_backward(ref_e[i], head, dks[i], dw));

  for (Eigen::Index i = 0; i < head.w.size(); ++i)
    track(res, dw.data()[i], central_diff(loss, head.w.data()[i]));
  for (Eigen::Index i = 0; i < anchor_e.size(); ++i)
    track(res, danchor(i), central_diff(loss, anchor_e(i)));
  for (std::size_t k = 0; k < ref_e.size(); ++k)
    for (Eigen::Index i = 0; i < ref_e[k].size(); ++i)
      track(res, dref[k](i), central_diff(loss, ref_e[k](i)));
}

}  // namespace

Real gradcheck_rel_err(Real analytic, Real numeric) {
  return std::abs(analytic - numeric) /
         std::max({static_cast<Real>(1.0), std::abs(analytic), std::abs(numeric)});
}

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, int instances) {
  GradCheckResult attn{"attention_block"}, cls{"class_head_focal"}, mask{"mask_head_bce_dice"},
      box{"box_head_l1_giou"}, ctr{"contrastive_projection"};
  for (int i = 0; i < instances; ++i) {
    std::mt19937_64 rng(seed + 7919ULL * static_cast<std::uint64_t>(i));
    check_attention(attn, rng);
    check_class_head(cls, rng);
    check_mask_head(mask, rng);
    check_box_head(box, rng);
    check_contrastive(ctr, rng);
  }
  return {attn, cls, mask, box, ctr};
}

}  // namespace tvis::nn
