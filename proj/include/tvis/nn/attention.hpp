#pragma once

#include "tvis/core/types.hpp"

#include <random>

namespace tvis::nn {

struct AttentionDims {
  int embed_dim = 256;
  int num_heads = 8;
  int ff_dim = 1024;
};

/// Weights of one pre-norm self-attention + feed-forward block plus the
/// temporal positional encoding hook. embed_dim must divide by num_heads.
struct AttentionBlockParams {
  int num_heads = 8;
  Mat wq, wk, wv, wo;  // embed_dim x embed_dim
  Vec bq, bk, bv, bo;
  Mat w1;  // ff_dim x embed_dim
  Vec b1;
  Mat w2;  // embed_dim x ff_dim
  Vec b2;
  Vec ln1_gamma, ln1_beta;
  Vec ln2_gamma, ln2_beta;

  int embed_dim() const { return static_cast<int>(wq.rows()); }
  int ff_dim() const { return static_cast<int>(w1.rows()); }
  int head_dim() const { return embed_dim() / num_heads; }

  static AttentionBlockParams zeros(const AttentionDims& dims);
  /// Xavier-style init with unit layer-norm scales.
  static AttentionBlockParams random(const AttentionDims& dims, std::mt19937_64& rng);
  /// Zeroed attention/FFN branches (block acts as the identity map on X).
  static AttentionBlockParams identity(const AttentionDims& dims);
};

/// Gradients w.r.t. every block parameter and the input embeddings.
struct AttentionBlockGrads {
  AttentionBlockParams params;
  Mat x;
};

/// Refines a window of embeddings (rows) with self-attention over the window.
/// Positional encodings of the absolute frame indices enter the attention and
/// feed-forward branches only; the residual stream carries X unchanged, so a
/// block with zeroed branch weights is the identity map. pad_mask marks slots
/// excluded as attention keys.
Mat attention_block_forward(const Mat& x, const IVec& frame_indices, const BoolArr& pad_mask,
                            const AttentionBlockParams& params, bool add_positional = true);

/// Reverse-mode partials of <upstream, output> w.r.t. params and X.
AttentionBlockGrads attention_block_gradients(const Mat& x, const IVec& frame_indices,
                                              const BoolArr& pad_mask,
                                              const AttentionBlockParams& params,
                                              const Mat& upstream, bool add_positional = true);

/// Analytic multiply-accumulate count for one refinement window of length
/// window_len, including the (optional) prediction-head cost for the one
/// refined slot the window emits.
std::int64_t attention_flop_count(int window_len, int embed_dim, int num_heads, int ff_dim,
                                  int num_classes = 0, int mask_kernel_dim = 0);

}  // namespace tvis::nn
