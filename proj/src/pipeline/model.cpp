#include "tvis/pipeline/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace tvis::pipeline {

namespace {

void xavier(Mat& m, std::mt19937_64& rng) {
  const Real limit = std::sqrt(6.0 / (m.rows() + m.cols()));
  std::uniform_real_distribution<Real> dist(-limit, limit);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
}

}  // namespace

Model Model::init(const ModelDims& dims, std::uint64_t seed) {
  if (dims.embed_dim % dims.num_heads != 0)
    throw std::invalid_argument("Model: embed_dim must divide by num_heads");
  std::mt19937_64 rng(seed);

  Model m;
  m.dims = dims;
  m.enc_w.resize(dims.embed_dim, dims.det_embed_dim);
  xavier(m.enc_w, rng);
  m.enc_b = Vec::Zero(dims.embed_dim);
  // Feature encoder starts near the identity so the analytic feature maps
  // pass through until training reshapes them.
  m.feat_w = Mat::Identity(dims.feature_dim, dims.feature_dim);
  m.feat_b = Vec::Zero(dims.feature_dim);
  m.contrastive.w.resize(dims.contrastive_dim, dims.embed_dim);
  xavier(m.contrastive.w, rng);
  m.heads.cls_w.resize(dims.num_classes, dims.embed_dim);
  xavier(m.heads.cls_w, rng);
  m.heads.cls_b = Vec::Zero(dims.num_classes);
  m.heads.kernel_w.resize(dims.feature_dim, dims.embed_dim);
  xavier(m.heads.kernel_w, rng);
  m.heads.kernel_b = Vec::Zero(dims.feature_dim);
  m.box_w.resize(4, dims.embed_dim);
  xavier(m.box_w, rng);
  m.box_b = Vec::Zero(4);
  m.attn = nn::AttentionBlockParams::random({dims.embed_dim, dims.num_heads, dims.ff_dim}, rng);
  m.qenc_w.resize(dims.embed_dim, 4 + dims.num_classes + dims.det_embed_dim);
  xavier(m.qenc_w, rng);
  m.qenc_b = Vec::Zero(dims.embed_dim);
  return m;
}

Model Model::zeros_like(const Model& other) {
  Model z = other;
  visit_tensors(z, [](const char*, auto& t) { t.setZero(); });
  return z;
}

std::vector<TensorRef> tensor_refs(Model& m) {
  std::vector<TensorRef> refs;
  visit_tensors(m, [&refs](const char* name, auto& t) {
    refs.push_back({name, t.data(), t.size(), t.rows(), t.cols()});
  });
  return refs;
}

AdamState AdamState::init(const Model& model) {
  AdamState st;
  st.m1 = Model::zeros_like(model);
  st.m2 = Model::zeros_like(model);
  st.step = 0;
  return st;
}

void adam_step(Model& params, const Model& grads, AdamState& state, const AdamConfig& cfg) {
  ++state.step;
  const Real b1 = cfg.beta1, b2 = cfg.beta2;
  const Real bc1 = 1.0 - std::pow(b1, static_cast<Real>(state.step));
  const Real bc2 = 1.0 - std::pow(b2, static_cast<Real>(state.step));

  auto p = tensor_refs(params);
  auto g = tensor_refs(const_cast<Model&>(grads));
  auto v1 = tensor_refs(state.m1);
  auto v2 = tensor_refs(state.m2);
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k].size != g[k].size)
      throw std::runtime_error("adam_step: gradient shape mismatch for " + p[k].name);
    for (Eigen::Index i = 0; i < p[k].size; ++i) {
      const Real grad = g[k].data[i];
      v1[k].data[i] = b1 * v1[k].data[i] + (1.0 - b1) * grad;
      v2[k].data[i] = b2 * v2[k].data[i] + (1.0 - b2) * grad * grad;
      const Real mhat = v1[k].data[i] / bc1;
      const Real vhat = v2[k].data[i] / bc2;
      p[k].data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace tvis::pipeline
