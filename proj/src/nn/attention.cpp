#include "tvis/nn/attention.hpp"

#include "tvis/nn/ops.hpp"

#include <stdexcept>

namespace tvis::nn {

namespace {

constexpr Real kMaskedScore = -1e30;

void check_dims(const AttentionDims& dims) {
  if (dims.embed_dim <= 0 || dims.num_heads <= 0 || dims.ff_dim <= 0)
    throw std::invalid_argument("AttentionDims: dimensions must be positive");
  if (dims.embed_dim % dims.num_heads != 0)
    throw std::invalid_argument("AttentionDims: embed_dim must divide by num_heads");
}

struct ForwardTape {
  Mat xp;                  // inputs + positional encodings
  LayerNormCache ln1, ln2;
  Mat a1, q, k, v;
  std::vector<Mat> attn;   // per-head softmax probabilities
  Mat concat;              // heads merged back to embed_dim
  Mat u;                   // post-attention residual stream
  Mat a2, h_pre, h_act;
};

Mat run_forward(const Mat& x, const IVec& frame_indices, const BoolArr& pad_mask,
                const AttentionBlockParams& p, bool add_positional, ForwardTape* tape) {
  const Eigen::Index wlen = x.rows();
  const int embed = p.embed_dim();
  const int heads = p.num_heads;
  const int dh = p.head_dim();
  if (x.cols() != embed)
    throw std::invalid_argument("attention_block: input width != embed_dim");
  if (add_positional && frame_indices.size() != wlen)
    throw std::invalid_argument("attention_block: frame index count != window length");
  if (pad_mask.size() != 0 && pad_mask.size() != wlen)
    throw std::invalid_argument("attention_block: pad mask length != window length");
  if (pad_mask.size() != 0 && pad_mask.all())
    throw std::invalid_argument("attention_block: every slot is masked out");

  ForwardTape local;
  ForwardTape& t = tape ? *tape : local;

  t.xp = x;
  if (add_positional) t.xp += positional_encoding_rows(frame_indices, embed);

  t.a1 = layer_norm_rows(t.xp, p.ln1_gamma, p.ln1_beta, &t.ln1);
  t.q = linear(t.a1, p.wq, p.bq);
  t.k = linear(t.a1, p.wk, p.bk);
  t.v = linear(t.a1, p.wv, p.bv);

  const Real scale = 1.0 / std::sqrt(static_cast<Real>(dh));
  t.attn.resize(heads);
  t.concat.resize(wlen, embed);
  for (int h = 0; h < heads; ++h) {
    auto qh = t.q.middleCols(h * dh, dh);
    auto kh = t.k.middleCols(h * dh, dh);
    auto vh = t.v.middleCols(h * dh, dh);
    Mat scores = scale * (qh * kh.transpose());
    for (Eigen::Index j = 0; j < pad_mask.size(); ++j)
      if (pad_mask(j)) scores.col(j).setConstant(kMaskedScore);
    t.attn[h] = softmax_rows(scores);
    t.concat.middleCols(h * dh, dh) = t.attn[h] * vh;
  }

  t.u = x + linear(t.concat, p.wo, p.bo);

  t.a2 = layer_norm_rows(t.u, p.ln2_gamma, p.ln2_beta, &t.ln2);
  t.h_pre = linear(t.a2, p.w1, p.b1);
  t.h_act = t.h_pre.unaryExpr([](Real z) { return gelu(z); });
  return t.u + linear(t.h_act, p.w2, p.b2);
}

}  // namespace

AttentionBlockParams AttentionBlockParams::zeros(const AttentionDims& dims) {
  check_dims(dims);
  AttentionBlockParams p;
  p.num_heads = dims.num_heads;
  p.wq = p.wk = p.wv = p.wo = Mat::Zero(dims.embed_dim, dims.embed_dim);
  p.bq = p.bk = p.bv = p.bo = Vec::Zero(dims.embed_dim);
  p.w1 = Mat::Zero(dims.ff_dim, dims.embed_dim);
  p.b1 = Vec::Zero(dims.ff_dim);
  p.w2 = Mat::Zero(dims.embed_dim, dims.ff_dim);
  p.b2 = Vec::Zero(dims.embed_dim);
  p.ln1_gamma = p.ln1_beta = p.ln2_gamma = p.ln2_beta = Vec::Zero(dims.embed_dim);
  return p;
}

AttentionBlockParams AttentionBlockParams::identity(const AttentionDims& dims) {
  AttentionBlockParams p = zeros(dims);
  p.ln1_gamma.setOnes();
  p.ln2_gamma.setOnes();
  return p;
}

AttentionBlockParams AttentionBlockParams::random(const AttentionDims& dims,
                                                  std::mt19937_64& rng) {
  AttentionBlockParams p = identity(dims);
  auto fill = [&rng](Mat& m, int fan_in, int fan_out) {
    const Real limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<Real> dist(-limit, limit);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
  };
  fill(p.wq, dims.embed_dim, dims.embed_dim);
  fill(p.wk, dims.embed_dim, dims.embed_dim);
  fill(p.wv, dims.embed_dim, dims.embed_dim);
  fill(p.wo, dims.embed_dim, dims.embed_dim);
  fill(p.w1, dims.embed_dim, dims.ff_dim);
  fill(p.w2, dims.ff_dim, dims.embed_dim);
  return p;
}

Mat attention_block_forward(const Mat& x, const IVec& frame_indices, const BoolArr& pad_mask,
                            const AttentionBlockParams& params, bool add_positional) {
  return run_forward(x, frame_indices, pad_mask, params, add_positional, nullptr);
}

AttentionBlockGrads attention_block_gradients(const Mat& x, const IVec& frame_indices,
                                              const BoolArr& pad_mask,
                                              const AttentionBlockParams& params,
                                              const Mat& upstream, bool add_positional) {
  ForwardTape t;
  run_forward(x, frame_indices, pad_mask, params, add_positional, &t);
  if (upstream.rows() != x.rows() || upstream.cols() != x.cols())
    throw std::invalid_argument("attention_block_gradients: upstream shape mismatch");

  const int heads = params.num_heads;
  const int dh = params.head_dim();
  const Real scale = 1.0 / std::sqrt(static_cast<Real>(dh));

  AttentionBlockGrads g;
  g.params = AttentionBlockParams::zeros(
      {params.embed_dim(), params.num_heads, params.ff_dim()});

  // FFN branch: y = u + w2^T gelu(w1^T ln2(u) + b1) + b2
  Mat du = upstream;
  Mat dh_act = linear_backward(t.h_act, params.w2, upstream, g.params.w2, g.params.b2);
  Mat dh_pre =
      dh_act.array() * t.h_pre.unaryExpr([](Real z) { return gelu_grad(z); }).array();
  Mat da2 = linear_backward(t.a2, params.w1, dh_pre, g.params.w1, g.params.b1);
  du += layer_norm_rows_backward(t.ln2, params.ln2_gamma, da2, g.params.ln2_gamma,
                                 g.params.ln2_beta);

  // Attention branch: u = x + wo^T concat(heads) + bo
  Mat dx = du;
  Mat dconcat = linear_backward(t.concat, params.wo, du, g.params.wo, g.params.bo);

  Mat dq = Mat::Zero(x.rows(), x.cols());
  Mat dk = Mat::Zero(x.rows(), x.cols());
  Mat dv = Mat::Zero(x.rows(), x.cols());
  for (int h = 0; h < heads; ++h) {
    auto qh = t.q.middleCols(h * dh, dh);
    auto kh = t.k.middleCols(h * dh, dh);
    auto vh = t.v.middleCols(h * dh, dh);
    auto doh = dconcat.middleCols(h * dh, dh);
    const Mat& probs = t.attn[h];

    Mat dprobs = doh * vh.transpose();
    dv.middleCols(h * dh, dh) = probs.transpose() * doh;
    Mat dscores = softmax_rows_backward(probs, dprobs);
    dq.middleCols(h * dh, dh) = scale * (dscores * kh);
    dk.middleCols(h * dh, dh) = scale * (dscores.transpose() * qh);
  }

  Mat da1 = linear_backward(t.a1, params.wq, dq, g.params.wq, g.params.bq);
  da1 += linear_backward(t.a1, params.wk, dk, g.params.wk, g.params.bk);
  da1 += linear_backward(t.a1, params.wv, dv, g.params.wv, g.params.bv);
  dx += layer_norm_rows_backward(t.ln1, params.ln1_gamma, da1, g.params.ln1_gamma,
                                 g.params.ln1_beta);

  g.x = dx;
  return g;
}

std::int64_t attention_flop_count(int window_len, int embed_dim, int num_heads, int ff_dim,
                                  int num_classes, int mask_kernel_dim) {
  if (window_len < 0 || embed_dim < 0 || num_heads < 0 || ff_dim < 0)
    throw std::invalid_argument("attention_flop_count: negative dimension");
  if (window_len == 0) return 0;
  const std::int64_t w = window_len, c = embed_dim, f = ff_dim;
  std::int64_t macs = 0;
  macs += 4 * w * c * c;      // query/key/value/output projections
  macs += 2 * w * w * c;      // attention scores + value mixing
  macs += 2 * w * c * f;      // feed-forward
  macs += c * (num_classes + mask_kernel_dim);  // heads on the emitted slot
  return macs;
}

}  // namespace tvis::nn
