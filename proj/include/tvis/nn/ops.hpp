#pragma once

#include "tvis/core/types.hpp"

#include <cmath>
#include <stdexcept>

namespace tvis::nn {

/// Numerically stabilized softmax of a vector expression.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(
    const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (v.size() == 0) throw std::invalid_argument("softmax: empty input");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (v.array() - v.maxCoeff()).exp().matrix();
  return e / e.sum();
}

/// Row-wise softmax of a score matrix.
Mat softmax_rows(const Mat& scores);

/// Given probabilities P = softmax_rows(S) and upstream dP, returns dS.
Mat softmax_rows_backward(const Mat& probs, const Mat& dprobs);

inline Real gelu(Real x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline Real gelu_grad(Real x) {
  const Real cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const Real pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

/// Sinusoidal encoding of an absolute frame index; interleaved sin/cos over
/// geometric frequencies with base period 10000. d must be even.
Vec temporal_positional_encoding(int t, int d);

/// Stacks temporal_positional_encoding for each frame index (rows).
Mat positional_encoding_rows(const IVec& frame_indices, int d);

struct LayerNormCache {
  Mat xhat;
  Vec inv_std;
};

/// Per-row layer normalization: y = gamma .* (x - mean) * inv_std + beta.
Mat layer_norm_rows(const Mat& x, const Vec& gamma, const Vec& beta,
                    LayerNormCache* cache = nullptr);

Mat layer_norm_rows_backward(const LayerNormCache& cache, const Vec& gamma, const Mat& dy,
                             Vec& dgamma, Vec& dbeta);

/// Y = X * W^T + 1 b^T (rows are items).
inline Mat linear(const Mat& x, const Mat& w, const Vec& b) {
  return (x * w.transpose()).rowwise() + b.transpose();
}

/// Accumulates dW, db; returns dX.
Mat linear_backward(const Mat& x, const Mat& w, const Mat& dy, Mat& dw, Vec& db);

}  // namespace tvis::nn
