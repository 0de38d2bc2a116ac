#include "tvis/pipeline/train.hpp"

#include "tvis/core/box.hpp"
#include "tvis/core/mask.hpp"
#include "tvis/nn/losses.hpp"
#include "tvis/nn/ops.hpp"
#include "tvis/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace tvis::pipeline {

namespace {

Vec sigmoid_vec(const Vec& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

void accumulate_attn(nn::AttentionBlockParams& dst, const nn::AttentionBlockParams& src) {
  dst.wq += src.wq;
  dst.bq += src.bq;
  dst.wk += src.wk;
  dst.bk += src.bk;
  dst.wv += src.wv;
  dst.bv += src.bv;
  dst.wo += src.wo;
  dst.bo += src.bo;
  dst.w1 += src.w1;
  dst.b1 += src.b1;
  dst.w2 += src.w2;
  dst.b2 += src.b2;
  dst.ln1_gamma += src.ln1_gamma;
  dst.ln1_beta += src.ln1_beta;
  dst.ln2_gamma += src.ln2_gamma;
  dst.ln2_beta += src.ln2_beta;
}

// Shared context for one optimizer step.
struct StepCtx {
  const Model& m;
  Model& g;
  const LossWeights& w;
  const VideoFrame& key;
  const VideoFrame& ref;
  Mat e_key, e_ref;          // encoded object embeddings, rows per detection
  Mat de_key, de_ref;
  Mat fkey, fref;            // encoded feature maps (feature_dim x npix)
  Mat dfkey, dfref;
};

/// Focal class loss on one embedding. Returns the raw focal value;
/// accumulates parameter gradients scaled by grad_scale and adds the
/// embedding gradient to de.
Real class_loss_bp(StepCtx& ctx, const Vec& e, std::optional<int> target, Real grad_scale,
                   Vec* de) {
  const Model& m = ctx.m;
  Vec z = m.heads.cls_w * e + m.heads.cls_b;
  ClassScores scores;
  scores.scores = sigmoid_vec(z);
  Vec dp = Vec::Zero(z.size());
  const Real loss =
      nn::focal_loss_grad(scores, target, ctx.w.focal_gamma, ctx.w.focal_alpha, dp);
  Vec dz =
      (dp.array() * scores.scores.array() * (1.0 - scores.scores.array())) * grad_scale;
  ctx.g.heads.cls_w += dz * e.transpose();
  ctx.g.heads.cls_b += dz;
  if (de) *de += m.heads.cls_w.transpose() * dz;
  return loss;
}

/// L1 + GIoU box loss against the ground-truth box. The head predicts
/// sigmoid (cx, cy, w, h); corners may exceed [0,1] during training.
Real box_loss_bp(StepCtx& ctx, const Vec& e, const BBox& gt, Real grad_scale, Vec* de) {
  const Model& m = ctx.m;
  Vec z = m.box_w * e + m.box_b;
  Vec s = sigmoid_vec(z);
  BBox pred;
  pred.x1 = s(0) - s(2) / 2;
  pred.x2 = s(0) + s(2) / 2;
  pred.y1 = s(1) - s(3) / 2;
  pred.y2 = s(1) + s(3) / 2;

  BBoxGrad dl1, dgiou;
  const Real l1 = bbox_l1_grad(pred, gt, dl1);
  const Real giou = bbox_giou_grad(pred, gt, dgiou);
  const Real value = ctx.w.w_l1 * l1 + ctx.w.w_giou * (1.0 - giou);

  BBoxGrad da;
  da.x1 = ctx.w.w_l1 * dl1.x1 - ctx.w.w_giou * dgiou.x1;
  da.y1 = ctx.w.w_l1 * dl1.y1 - ctx.w.w_giou * dgiou.y1;
  da.x2 = ctx.w.w_l1 * dl1.x2 - ctx.w.w_giou * dgiou.x2;
  da.y2 = ctx.w.w_l1 * dl1.y2 - ctx.w.w_giou * dgiou.y2;

  Vec ds(4);
  ds(0) = da.x1 + da.x2;
  ds(1) = da.y1 + da.y2;
  ds(2) = 0.5 * (da.x2 - da.x1);
  ds(3) = 0.5 * (da.y2 - da.y1);
  Vec dz = (ds.array() * s.array() * (1.0 - s.array())) * grad_scale;
  ctx.g.box_w += dz * e.transpose();
  ctx.g.box_b += dz;
  if (de) *de += m.box_w.transpose() * dz;
  return value;
}

/// BCE + dice mask loss at the feature resolution against a coarse binary
/// target. dfeat accumulates the gradient w.r.t. the encoded feature map.
Real mask_loss_bp(StepCtx& ctx, const Vec& e, const Mat& feat, const MaskGrid& coarse_gt,
                  int fh, int fw, Real grad_scale, Vec* de, Mat* dfeat) {
  const Model& m = ctx.m;
  Vec kernel = m.heads.kernel_w * e + m.heads.kernel_b;
  Vec logits = feat.transpose() * kernel;
  Vec probs_flat = sigmoid_vec(logits);
  Mat probs = Eigen::Map<Mat>(probs_flat.data(), fh, fw);

  Mat dprobs = Mat::Zero(fh, fw);
  const Real bce = nn::bce_mask_loss_grad(probs, coarse_gt, dprobs);
  Mat dprobs_dice = Mat::Zero(fh, fw);
  const Real dice = nn::dice_loss_grad(probs, coarse_gt, dprobs_dice);
  dprobs = ctx.w.w_bce * dprobs + ctx.w.w_dice * dprobs_dice;

  Vec dlogits =
      (Eigen::Map<Vec>(dprobs.data(), dprobs.size()).array() * probs_flat.array() *
       (1.0 - probs_flat.array())) *
      grad_scale;
  Vec dkernel = feat * dlogits;
  if (dfeat) *dfeat += kernel * dlogits.transpose();
  ctx.g.heads.kernel_w += dkernel * e.transpose();
  ctx.g.heads.kernel_b += dkernel;
  if (de) *de += m.heads.kernel_w.transpose() * dkernel;
  return ctx.w.w_bce * bce + ctx.w.w_dice * dice;
}

const GtObjectView* find_gt(const VideoFrame& frame, int track) {
  for (const auto& o : frame.gt)
    if (o.track_id == track) return &o;
  return nullptr;
}

int find_det(const VideoFrame& frame, int track) {
  for (std::size_t i = 0; i < frame.det_track.size(); ++i)
    if (frame.det_track[i] == track) return static_cast<int>(i);
  return -1;
}

Vec query_input(const cdn::CdnQuery& q, int num_classes, int det_embed_dim) {
  Vec in = Vec::Zero(4 + num_classes + det_embed_dim);
  in(0) = q.noised_bbox.x1;
  in(1) = q.noised_bbox.y1;
  in(2) = q.noised_bbox.x2;
  in(3) = q.noised_bbox.y2;
  in(4 + q.noised_class) = 1.0;
  if (q.noised_appearance.size() == det_embed_dim)
    in.tail(det_embed_dim) = q.noised_appearance;
  return in;
}

std::vector<cdn::GtObjectRef> gt_refs(const VideoFrame& frame) {
  std::vector<cdn::GtObjectRef> refs;
  for (const auto& o : frame.gt) refs.push_back({o.track_id, o.bbox, o.class_id, o.appearance});
  return refs;
}

}  // namespace

std::pair<int, int> sample_frame_pair(int video_length, int max_gap, std::mt19937_64& rng) {
  if (video_length < 1) throw std::invalid_argument("sample_frame_pair: empty video");
  if (video_length == 1) return {0, 0};
  std::vector<std::pair<int, int>> valid;
  for (int a = 0; a < video_length; ++a)
    for (int b = 0; b < video_length; ++b)
      if (a != b && std::abs(a - b) <= max_gap) valid.emplace_back(a, b);
  std::uniform_int_distribution<std::size_t> pick(0, valid.size() - 1);
  return valid[pick(rng)];
}

Real total_loss(const FrameLosses& frame, Real assoc, Real refine, const LossWeights& w) {
  auto check = [](Real v, const char* name) {
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("total_loss: non-finite component ") + name);
  };
  check(frame.cls, "frame.cls");
  check(frame.box, "frame.box");
  check(frame.mask, "frame.mask");
  check(assoc, "association");
  check(refine, "refine");
  return w.w_frame * frame.sum() + w.w_assoc * assoc + w.w_refine * refine;
}

StepReport train_step(Model& model, AdamState& opt, const VideoData& video, int key_frame,
                      int ref_frame, const TrainSettings& cfg, std::uint64_t step_seed) {
  if (key_frame < 0 || key_frame >= video.length() || ref_frame < 0 ||
      ref_frame >= video.length())
    throw std::invalid_argument("train_step: frame index out of range");

  Model grads = Model::zeros_like(model);
  const VideoFrame& key = video.frames[key_frame];
  const VideoFrame& ref = video.frames[ref_frame];
  StepCtx ctx{model, grads, cfg.weights, key, ref, {}, {}, {}, {}, {}, {}, {}, {}};

  auto encode = [&](const VideoFrame& f, Mat& e, Mat& de, Mat& feat, Mat& dfeat) {
    const Eigen::Index n = f.det_raw.rows();
    e = n > 0 ? Mat(nn::linear(f.det_raw, model.enc_w, model.enc_b)) : Mat(0, model.dims.embed_dim);
    de = Mat::Zero(e.rows(), e.cols());
    feat = (model.feat_w * f.features.data).colwise() + model.feat_b;
    dfeat = Mat::Zero(feat.rows(), feat.cols());
  };
  encode(key, ctx.e_key, ctx.de_key, ctx.fkey, ctx.dfkey);
  encode(ref, ctx.e_ref, ctx.de_ref, ctx.fref, ctx.dfref);

  const int fh = key.features.height, fw = key.features.width;
  const LossWeights& w = cfg.weights;
  StepReport report;

  // --- Frame-level losses, key frame only -------------------------------
  const int n_key = static_cast<int>(key.det_track.size());
  std::uint64_t cdn_seed_key = step_seed * 2654435761ULL + 17;
  std::uint64_t cdn_seed_ref = step_seed * 2654435761ULL + 59;
  std::vector<cdn::CdnQuery> key_queries, ref_queries;
  Mat key_qe, ref_qe;  // query embeddings, rows per query
  const bool any_cdn = cfg.enable_frame_cdn || cfg.cdn.enable_association_cdn ||
                       cfg.cdn.enable_temporal_cdn;
  if (any_cdn) {
    key_queries =
        cdn::gen_cdn_queries(gt_refs(key), cfg.cdn, model.dims.num_classes, cdn_seed_key);
    ref_queries =
        cdn::gen_cdn_queries(gt_refs(ref), cfg.cdn, model.dims.num_classes, cdn_seed_ref);
    auto embed_queries = [&](std::vector<cdn::CdnQuery>& qs, Mat& qe) {
      qe.resize(static_cast<Eigen::Index>(qs.size()), model.dims.embed_dim);
      for (std::size_t i = 0; i < qs.size(); ++i) {
        Vec in = query_input(qs[i], model.dims.num_classes, model.dims.det_embed_dim);
        qe.row(i) = (model.qenc_w * in + model.qenc_b).transpose();
        qs[i].embedding = qe.row(i).transpose();
      }
    };
    embed_queries(key_queries, key_qe);
    embed_queries(ref_queries, ref_qe);
  }
  Mat dkey_qe = Mat::Zero(key_qe.rows(), key_qe.cols());
  Mat dref_qe = Mat::Zero(ref_qe.rows(), ref_qe.cols());

  if (n_key > 0) {
    const Real inv_n = 1.0 / n_key;
    for (int i = 0; i < n_key; ++i) {
      Vec e = ctx.e_key.row(i).transpose();
      Vec de = Vec::Zero(e.size());
      const int track = key.det_track[i];
      const GtObjectView* gt = track >= 0 ? find_gt(key, track) : nullptr;
      std::optional<int> target =
          gt ? std::optional<int>(gt->class_id) : std::nullopt;

      report.frame.cls +=
          w.w_focal * inv_n *
          class_loss_bp(ctx, e, target, w.w_frame * w.w_focal * inv_n, &de);
      if (gt) {
        report.frame.box += inv_n * box_loss_bp(ctx, e, gt->bbox, w.w_frame * inv_n, &de);
        report.frame.mask += inv_n * mask_loss_bp(ctx, e, ctx.fkey, gt->coarse_mask, fh, fw,
                                                  w.w_frame * inv_n, &de, &ctx.dfkey);
      }
      ctx.de_key.row(i) += de.transpose();
    }
  }

  // Frame-level denoising queries (key frame): positives reconstruct their
  // object, negatives are supervised as background.
  if (cfg.enable_frame_cdn && !key_queries.empty()) {
    const Real inv_q = 1.0 / static_cast<Real>(key_queries.size());
    for (std::size_t qi = 0; qi < key_queries.size(); ++qi) {
      const cdn::CdnQuery& q = key_queries[qi];
      Vec e = key_qe.row(static_cast<Eigen::Index>(qi)).transpose();
      Vec de = Vec::Zero(e.size());
      const GtObjectView* gt = find_gt(key, q.source_track);
      const bool positive = q.polarity == cdn::Polarity::kPositive && gt != nullptr;
      std::optional<int> target =
          positive ? std::optional<int>(gt->class_id) : std::nullopt;
      report.frame.cls += w.w_focal * inv_q *
                          class_loss_bp(ctx, e, target, w.w_frame * w.w_focal * inv_q, &de);
      if (positive) {
        report.frame.box += inv_q * box_loss_bp(ctx, e, gt->bbox, w.w_frame * inv_q, &de);
        report.frame.mask += inv_q * mask_loss_bp(ctx, e, ctx.fkey, gt->coarse_mask, fh, fw,
                                                  w.w_frame * inv_q, &de, &ctx.dfkey);
      }
      dkey_qe.row(static_cast<Eigen::Index>(qi)) += de.transpose();
    }
  }

  // --- Association loss --------------------------------------------------
  {
    std::vector<int> anchor_idx, anchor_tracks, ref_tracks;
    for (int i = 0; i < n_key; ++i)
      if (key.det_track[i] >= 0) {
        anchor_idx.push_back(i);
        anchor_tracks.push_back(key.det_track[i]);
      }
    for (std::size_t j = 0; j < ref.det_track.size(); ++j) ref_tracks.push_back(ref.det_track[j]);

    std::vector<Vec> ref_proj(ref_tracks.size());
    for (std::size_t j = 0; j < ref_tracks.size(); ++j)
      ref_proj[j] =
          assoc::project_contrastive(ctx.e_ref.row(static_cast<Eigen::Index>(j)).transpose(),
                                     model.contrastive);

    const auto pairs = assoc::build_pairs(anchor_tracks, ref_tracks);
    std::vector<Vec> dref_proj(ref_proj.size());
    for (std::size_t j = 0; j < ref_proj.size(); ++j)
      dref_proj[j] = Vec::Zero(model.dims.contrastive_dim);

    if (!anchor_idx.empty()) {
      const Real inv_a = 1.0 / static_cast<Real>(anchor_idx.size());
      for (std::size_t a = 0; a < anchor_idx.size(); ++a) {
        Vec e = ctx.e_key.row(anchor_idx[a]).transpose();
        Vec v = assoc::project_contrastive(e, model.contrastive);
        Vec dv = Vec::Zero(v.size());
        const Real value = assoc::contrastive_loss_grad(v, pairs[a], ref_proj, dv, dref_proj);
        report.assoc += inv_a * value;
        dv *= w.w_assoc * inv_a;
        ctx.de_key.row(anchor_idx[a]) +=
            assoc::project_contrastive_backward(e, model.contrastive, dv, grads.contrastive.w)
                .transpose();
      }
      for (std::size_t j = 0; j < ref_proj.size(); ++j) {
        Vec dj = dref_proj[j] * (w.w_assoc * inv_a);
        ctx.de_ref.row(static_cast<Eigen::Index>(j)) +=
            assoc::project_contrastive_backward(ctx.e_ref.row(static_cast<Eigen::Index>(j))
                                                    .transpose(),
                                                model.contrastive, dj, grads.contrastive.w)
                .transpose();
      }
    }

    if (cfg.cdn.enable_association_cdn && !key_queries.empty() && !ref_queries.empty()) {
      auto cdn_assoc_pass = [&](const std::vector<cdn::CdnQuery>& anchors, const Mat& anchor_qe,
                                Mat& danchor_qe, const std::vector<cdn::CdnQuery>& others,
                                const Mat& other_qe, Mat& dother_qe) {
        std::vector<Vec> other_proj(others.size());
        for (std::size_t j = 0; j < others.size(); ++j)
          other_proj[j] = assoc::project_contrastive(
              other_qe.row(static_cast<Eigen::Index>(j)).transpose(), model.contrastive);
        std::vector<Vec> dother_proj(other_proj.size());
        for (auto& d : dother_proj) d = Vec::Zero(model.dims.contrastive_dim);

        const auto qpairs = cdn::pair_association_cdn(anchors, others);
        if (qpairs.empty()) return;
        const Real inv_a = 1.0 / static_cast<Real>(qpairs.size());
        for (const auto& ps : qpairs) {
          Vec e = anchor_qe.row(ps.anchor).transpose();
          Vec v = assoc::project_contrastive(e, model.contrastive);
          Vec dv = Vec::Zero(v.size());
          const Real value = assoc::contrastive_loss_grad(v, ps, other_proj, dv, dother_proj);
          report.assoc += inv_a * value;
          dv *= w.w_assoc * inv_a;
          danchor_qe.row(ps.anchor) +=
              assoc::project_contrastive_backward(e, model.contrastive, dv,
                                                  grads.contrastive.w)
                  .transpose();
        }
        for (std::size_t j = 0; j < other_proj.size(); ++j) {
          Vec dj = dother_proj[j] * (w.w_assoc * inv_a);
          dother_qe.row(static_cast<Eigen::Index>(j)) +=
              assoc::project_contrastive_backward(
                  other_qe.row(static_cast<Eigen::Index>(j)).transpose(), model.contrastive,
                  dj, grads.contrastive.w)
                  .transpose();
        }
      };
      cdn_assoc_pass(key_queries, key_qe, dkey_qe, ref_queries, ref_qe, dref_qe);
      if (cfg.cdn.mirror_association)
        cdn_assoc_pass(ref_queries, ref_qe, dref_qe, key_queries, key_qe, dkey_qe);
    }
  }

  // --- Refinement loss over both frames ---------------------------------
  {
    const VideoFrame* frames2[2];
    if (key.frame_index <= ref.frame_index) {
      frames2[0] = &key;
      frames2[1] = &ref;
    } else {
      frames2[0] = &ref;
      frames2[1] = &key;
    }
    auto e_of = [&](const VideoFrame* f) -> Mat& { return f == &key ? ctx.e_key : ctx.e_ref; };
    auto de_of = [&](const VideoFrame* f) -> Mat& {
      return f == &key ? ctx.de_key : ctx.de_ref;
    };
    auto feat_of = [&](const VideoFrame* f) -> Mat& { return f == &key ? ctx.fkey : ctx.fref; };
    auto dfeat_of = [&](const VideoFrame* f) -> Mat& {
      return f == &key ? ctx.dfkey : ctx.dfref;
    };

    std::set<int> tracks;
    for (const auto& o : key.gt) tracks.insert(o.track_id);
    for (const auto& o : ref.gt) tracks.insert(o.track_id);

    const MaskGrid empty_grid = MaskGrid::Zero(fh, fw);

    std::mt19937_64 exposure_rng(step_seed * 2654435761ULL + 101);
    std::uniform_real_distribution<Real> coin(0.0, 1.0);
    std::vector<char> exposed;
    int total_slots = 0;
    for (int track : tracks) {
      (void)track;
      const bool expose = coin(exposure_rng) < cfg.feedback_exposure;
      exposed.push_back(expose ? 1 : 0);
      total_slots += expose ? 3 : 2;
    }

    if (!tracks.empty()) {
      const Real inv_s = 1.0 / static_cast<Real>(total_slots);
      int track_no = -1;
      for (int track : tracks) {
        ++track_no;
        Mat x = Mat::Zero(2, model.dims.embed_dim);
        IVec fidx(2);
        int det_idx[2];
        for (int s = 0; s < 2; ++s) {
          fidx(s) = frames2[s]->frame_index;
          det_idx[s] = find_det(*frames2[s], track);
          if (det_idx[s] >= 0) x.row(s) = e_of(frames2[s]).row(det_idx[s]);
        }
        Mat y = nn::attention_block_forward(x, fidx, BoolArr(), model.attn, true);

        Mat dy = Mat::Zero(2, model.dims.embed_dim);
        for (int s = 0; s < 2; ++s) {
          Vec eh = y.row(s).transpose();
          Vec de = Vec::Zero(eh.size());
          const GtObjectView* gt = find_gt(*frames2[s], track);
          std::optional<int> target = gt ? std::optional<int>(gt->class_id) : std::nullopt;
          report.refine += w.w_focal * inv_s *
                           class_loss_bp(ctx, eh, target, w.w_refine * w.w_focal * inv_s, &de);
          const MaskGrid& mask_target = gt ? gt->coarse_mask : empty_grid;
          report.refine += inv_s * mask_loss_bp(ctx, eh, feat_of(frames2[s]), mask_target, fh,
                                                fw, w.w_refine * inv_s, &de,
                                                &dfeat_of(frames2[s]));
          dy.row(s) = de.transpose();
        }
        auto ag = nn::attention_block_gradients(x, fidx, BoolArr(), model.attn, dy, true);
        accumulate_attn(grads.attn, ag.params);
        for (int s = 0; s < 2; ++s)
          if (det_idx[s] >= 0) de_of(frames2[s]).row(det_idx[s]) += ag.x.row(s);

        // Feedback exposure: the past slot enters as its own refined output
        // (stop-gradient), the form online inference feeds back.
        if (exposed[track_no]) {
          Mat x0(1, model.dims.embed_dim);
          x0.row(0) = x.row(0);
          IVec f0(1);
          f0 << fidx(0);
          Mat r0 = nn::attention_block_forward(x0, f0, BoolArr(), model.attn, true);
          Mat xb(2, model.dims.embed_dim);
          xb.row(0) = r0.row(0);
          xb.row(1) = x.row(1);
          Mat yb = nn::attention_block_forward(xb, fidx, BoolArr(), model.attn, true);

          Vec eh = yb.row(1).transpose();
          Vec de = Vec::Zero(eh.size());
          const GtObjectView* gt = find_gt(*frames2[1], track);
          std::optional<int> target = gt ? std::optional<int>(gt->class_id) : std::nullopt;
          report.refine += w.w_focal * inv_s *
                           class_loss_bp(ctx, eh, target, w.w_refine * w.w_focal * inv_s, &de);
          const MaskGrid& mask_target = gt ? gt->coarse_mask : empty_grid;
          report.refine += inv_s * mask_loss_bp(ctx, eh, feat_of(frames2[1]), mask_target, fh,
                                                fw, w.w_refine * inv_s, &de,
                                                &dfeat_of(frames2[1]));
          Mat dyb = Mat::Zero(2, model.dims.embed_dim);
          dyb.row(1) = de.transpose();
          auto agb = nn::attention_block_gradients(xb, fidx, BoolArr(), model.attn, dyb, true);
          accumulate_attn(grads.attn, agb.params);
          if (det_idx[1] >= 0) de_of(frames2[1]).row(det_idx[1]) += agb.x.row(1);
        }
      }
    }

    // Temporal denoising tracklets: positives reconstruct, negatives predict
    // empty masks and zero class confidence.
    if (cfg.cdn.enable_temporal_cdn && (!key_queries.empty() || !ref_queries.empty())) {
      const VideoFrame* qframes[2] = {frames2[0], frames2[1]};
      const std::vector<cdn::CdnQuery>* qlists[2];
      Mat* qes[2];
      Mat* dqes[2];
      for (int s = 0; s < 2; ++s) {
        if (qframes[s] == &key) {
          qlists[s] = &key_queries;
          qes[s] = &key_qe;
          dqes[s] = &dkey_qe;
        } else {
          qlists[s] = &ref_queries;
          qes[s] = &ref_qe;
          dqes[s] = &dref_qe;
        }
      }
      auto tracklets = (qframes[0] == &key)
                           ? cdn::build_temporal_cdn_tracklets(key_queries, ref_queries)
                           : cdn::build_temporal_cdn_tracklets(ref_queries, key_queries);
      if (!tracklets.empty()) {
        const Real inv_s = 1.0 / static_cast<Real>(2 * tracklets.size());
        for (const auto& tr : tracklets) {
          Mat x = Mat::Zero(2, model.dims.embed_dim);
          IVec fidx(2);
          int qidx[2] = {tr.key_index, tr.ref_index};
          for (int s = 0; s < 2; ++s) {
            fidx(s) = qframes[s]->frame_index;
            if (qidx[s] >= 0) x.row(s) = qes[s]->row(qidx[s]);
          }
          Mat y = nn::attention_block_forward(x, fidx, BoolArr(), model.attn, true);
          Mat dy = Mat::Zero(2, model.dims.embed_dim);
          for (int s = 0; s < 2; ++s) {
            Vec eh = y.row(s).transpose();
            Vec de = Vec::Zero(eh.size());
            const GtObjectView* gt = find_gt(*qframes[s], tr.track_id);
            const bool positive = tr.positive && gt != nullptr;
            std::optional<int> target =
                positive ? std::optional<int>(gt->class_id) : std::nullopt;
            report.refine +=
                w.w_focal * inv_s *
                class_loss_bp(ctx, eh, target, w.w_refine * w.w_focal * inv_s, &de);
            const MaskGrid& mask_target = positive ? gt->coarse_mask : empty_grid;
            report.refine += inv_s * mask_loss_bp(ctx, eh, feat_of(qframes[s]), mask_target,
                                                  fh, fw, w.w_refine * inv_s, &de,
                                                  &dfeat_of(qframes[s]));
            dy.row(s) = de.transpose();
          }
          auto ag = nn::attention_block_gradients(x, fidx, BoolArr(), model.attn, dy, true);
          accumulate_attn(grads.attn, ag.params);
          for (int s = 0; s < 2; ++s)
            if (qidx[s] >= 0) dqes[s]->row(qidx[s]) += ag.x.row(s);
        }
      }
    }
  }

  // --- Back-propagate into the encoders ----------------------------------
  auto encoder_bp = [&](const VideoFrame& f, const Mat& de, const Mat& dfeat) {
    if (de.rows() > 0) {
      grads.enc_w += de.transpose() * f.det_raw;
      grads.enc_b += de.colwise().sum().transpose();
    }
    grads.feat_w += dfeat * f.features.data.transpose();
    grads.feat_b += dfeat.rowwise().sum();
  };
  encoder_bp(key, ctx.de_key, ctx.dfkey);
  encoder_bp(ref, ctx.de_ref, ctx.dfref);

  if (any_cdn) {
    auto query_bp = [&](const std::vector<cdn::CdnQuery>& qs, const Mat& dqe) {
      for (std::size_t i = 0; i < qs.size(); ++i) {
        Vec in = query_input(qs[i], model.dims.num_classes, model.dims.det_embed_dim);
        Vec d = dqe.row(static_cast<Eigen::Index>(i)).transpose();
        grads.qenc_w += d * in.transpose();
        grads.qenc_b += d;
      }
    };
    query_bp(key_queries, dkey_qe);
    query_bp(ref_queries, dref_qe);
  }

  report.total = total_loss(report.frame, report.assoc, report.refine, w);
  adam_step(model, grads, opt, cfg.adam);
  return report;
}

TrainResult train_model(const std::vector<VideoData>& videos, const ModelDims& dims,
                        const TrainSettings& cfg) {
  if (videos.empty()) throw std::invalid_argument("train_model: no videos");
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  result.model = Model::init(dims, cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  AdamState opt = AdamState::init(result.model);

  std::uniform_int_distribution<std::size_t> pick_video(0, videos.size() - 1);
  for (int step = 0; step < cfg.steps; ++step) {
    const VideoData& video = videos[pick_video(rng)];
    auto [k, r] = sample_frame_pair(video.length(), cfg.max_frame_gap, rng);
    const std::uint64_t step_seed = rng();
    result.history.push_back(train_step(result.model, opt, video, k, r, cfg, step_seed));
  }
  return result;
}

MaskGrid downsample_majority(const MaskGrid& full, int stride) {
  const int fh = static_cast<int>(full.rows()) / stride;
  const int fw = static_cast<int>(full.cols()) / stride;
  MaskGrid coarse(fh, fw);
  for (int cx = 0; cx < fw; ++cx)
    for (int cy = 0; cy < fh; ++cy) {
      int count = 0;
      for (int dx = 0; dx < stride; ++dx)
        for (int dy = 0; dy < stride; ++dy) count += full(cy * stride + dy, cx * stride + dx);
      // at least half the covered pixels foreground
      coarse(cy, cx) = 2 * count >= stride * stride ? 1 : 0;
    }
  return coarse;
}

VideoData make_video_data(const synth::SynthVideo& video,
                          const std::vector<std::vector<synth::SimDetection>>& detections,
                          int stride) {
  VideoData v;
  v.video_id = video.video_id;
  v.canvas_h = video.canvas_h;
  v.canvas_w = video.canvas_w;
  v.frames.resize(video.frames.size());
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    VideoFrame& f = v.frames[t];
    f.frame_index = static_cast<int>(t);
    f.features = video.features[t];
    for (const synth::GtObject& o : video.frames[t].objects) {
      GtObjectView g;
      g.track_id = o.track_id;
      g.class_id = o.class_id;
      g.bbox = o.bbox;
      g.full_mask = o.visible_mask;
      g.coarse_mask = downsample_majority(rle_decode(o.visible_mask), stride);
      g.appearance = video.track_base.at(o.track_id - 1);
      f.gt.push_back(std::move(g));
    }
    const auto& dets = detections.at(t);
    const int n = static_cast<int>(dets.size());
    f.det_raw.resize(n, n > 0 ? dets[0].embedding.size() : 0);
    for (int i = 0; i < n; ++i) {
      f.det_track.push_back(dets[i].source_track);
      f.det_conf.push_back(dets[i].confidence);
      f.det_box.push_back(dets[i].bbox);
      f.det_mask.push_back(dets[i].mask);
      f.det_raw.row(i) = dets[i].embedding.transpose();
    }
  }
  return v;
}

std::vector<VideoData> load_videos(const std::string& data_dir, const DatasetManifest& manifest,
                                   bool eval_split) {
  const std::string split = eval_split ? "eval" : "train";
  const auto gt_records = read_jsonl(data_dir + "/" + split + "_gt.jsonl");
  const auto det_records = read_jsonl(data_dir + "/" + split + "_det.jsonl");
  const auto& ids = eval_split ? manifest.eval_videos : manifest.train_videos;

  std::vector<VideoData> videos;
  for (const std::string& id : ids) {
    VideoData v;
    v.video_id = id;
    v.canvas_h = manifest.canvas_h;
    v.canvas_w = manifest.canvas_w;
    auto features = read_features(data_dir + "/features/" + id + ".feat");
    v.frames.resize(features.size());
    for (std::size_t t = 0; t < features.size(); ++t) {
      v.frames[t].frame_index = static_cast<int>(t);
      v.frames[t].features = std::move(features[t]);
      v.frames[t].det_raw = Mat::Zero(0, manifest.det_embed_dim);
    }

    for (const FrameRecord& r : gt_records) {
      if (r.video_id != id) continue;
      auto& frame = v.frames.at(r.frame_index);
      for (const ObjectRecord& o : r.objects) {
        GtObjectView g;
        g.track_id = o.track_id.value_or(-1);
        g.class_id = o.class_id;
        g.bbox = o.bbox;
        g.full_mask = o.mask;
        g.coarse_mask = downsample_majority(rle_decode(o.mask), manifest.stride);
        g.appearance = o.embedding.size() == manifest.det_embed_dim
                           ? o.embedding
                           : Vec(Vec::Zero(manifest.det_embed_dim));
        frame.gt.push_back(std::move(g));
      }
    }

    for (const FrameRecord& r : det_records) {
      if (r.video_id != id) continue;
      auto& frame = v.frames.at(r.frame_index);
      const int n = static_cast<int>(r.objects.size());
      frame.det_raw.resize(n, manifest.det_embed_dim);
      for (int i = 0; i < n; ++i) {
        const ObjectRecord& o = r.objects[i];
        frame.det_track.push_back(o.track_id.value_or(-1));
        frame.det_conf.push_back(o.confidence);
        frame.det_box.push_back(o.bbox);
        frame.det_mask.push_back(o.mask);
        if (o.embedding.size() != manifest.det_embed_dim)
          throw std::runtime_error("load_videos: detection embedding width mismatch");
        frame.det_raw.row(i) = o.embedding.transpose();
      }
    }
    videos.push_back(std::move(v));
  }
  return videos;
}

}  // namespace tvis::pipeline
