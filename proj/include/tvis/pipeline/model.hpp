#pragma once

#include "tvis/assoc/contrastive.hpp"
#include "tvis/nn/attention.hpp"
#include "tvis/refine/refiner.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tvis::pipeline {

struct ModelDims {
  int embed_dim = 64;        // object embedding width C_E
  int num_heads = 4;
  int ff_dim = 128;
  int contrastive_dim = 32;
  int num_classes = 2;
  int det_embed_dim = 16;    // raw detector embedding width
  int feature_dim = 8;
  int mask_stride = 4;
};

/// Full trainable state: the frame-level stand-in (embedding and feature
/// encoders, heads), the contrastive head, the temporal refinement block, and
/// the denoising-query encoder. Class and mask heads are shared between the
/// frame-level and refined prediction paths.
struct Model {
  ModelDims dims;

  Mat enc_w;   // embed_dim x det_embed_dim
  Vec enc_b;
  Mat feat_w;  // feature_dim x feature_dim, applied per pixel
  Vec feat_b;
  assoc::ContrastiveHead contrastive;
  refine::RefineHeads heads;
  Mat box_w;   // 4 x embed_dim
  Vec box_b;
  nn::AttentionBlockParams attn;
  Mat qenc_w;  // embed_dim x (4 + num_classes + det_embed_dim)
  Vec qenc_b;

  static Model init(const ModelDims& dims, std::uint64_t seed);
  static Model zeros_like(const Model& other);
};

/// Enumerates every trainable tensor in a fixed order. The callback receives
/// (name, tensor&) where the tensor is Mat or Vec.
template <class ModelT, class F>
void visit_tensors(ModelT& m, F&& f) {
  f("enc.w", m.enc_w);
  f("enc.b", m.enc_b);
  f("feat.w", m.feat_w);
  f("feat.b", m.feat_b);
  f("contrastive.w", m.contrastive.w);
  f("cls.w", m.heads.cls_w);
  f("cls.b", m.heads.cls_b);
  f("kernel.w", m.heads.kernel_w);
  f("kernel.b", m.heads.kernel_b);
  f("box.w", m.box_w);
  f("box.b", m.box_b);
  f("attn.wq", m.attn.wq);
  f("attn.bq", m.attn.bq);
  f("attn.wk", m.attn.wk);
  f("attn.bk", m.attn.bk);
  f("attn.wv", m.attn.wv);
  f("attn.bv", m.attn.bv);
  f("attn.wo", m.attn.wo);
  f("attn.bo", m.attn.bo);
  f("attn.w1", m.attn.w1);
  f("attn.b1", m.attn.b1);
  f("attn.w2", m.attn.w2);
  f("attn.b2", m.attn.b2);
  f("attn.ln1_gamma", m.attn.ln1_gamma);
  f("attn.ln1_beta", m.attn.ln1_beta);
  f("attn.ln2_gamma", m.attn.ln2_gamma);
  f("attn.ln2_beta", m.attn.ln2_beta);
  f("qenc.w", m.qenc_w);
  f("qenc.b", m.qenc_b);
}

struct TensorRef {
  std::string name;
  Real* data;
  Eigen::Index size;
  Eigen::Index rows;
  Eigen::Index cols;
};

std::vector<TensorRef> tensor_refs(Model& m);

/// Adam optimizer state; moment tensors mirror the model layout.
struct AdamState {
  Model m1;
  Model m2;
  long step = 0;

  static AdamState init(const Model& model);
};

struct AdamConfig {
  Real lr = 1e-4;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
};

void adam_step(Model& params, const Model& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace tvis::pipeline
