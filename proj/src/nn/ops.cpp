#include "tvis/nn/ops.hpp"

namespace tvis::nn {

Mat softmax_rows(const Mat& scores) {
  Mat out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    out.row(i) = softmax(scores.row(i).transpose()).transpose();
  return out;
}

Mat softmax_rows_backward(const Mat& probs, const Mat& dprobs) {
  // dS = (dP - rowsum(dP .* P)) .* P
  Vec row_dot = (dprobs.array() * probs.array()).rowwise().sum();
  return ((dprobs.colwise() - row_dot).array() * probs.array()).matrix();
}

Vec temporal_positional_encoding(int t, int d) {
  if (t < 0) throw std::invalid_argument("temporal_positional_encoding: t must be >= 0");
  if (d <= 0 || d % 2 != 0)
    throw std::invalid_argument("temporal_positional_encoding: d must be positive and even");
  Vec pe(d);
  for (int i = 0; i < d / 2; ++i) {
    const Real freq = std::pow(10000.0, -2.0 * i / d);
    pe(2 * i) = std::sin(t * freq);
    pe(2 * i + 1) = std::cos(t * freq);
  }
  return pe;
}

Mat positional_encoding_rows(const IVec& frame_indices, int d) {
  Mat pe(frame_indices.size(), d);
  for (Eigen::Index r = 0; r < frame_indices.size(); ++r)
    pe.row(r) = temporal_positional_encoding(frame_indices(r), d).transpose();
  return pe;
}

namespace {
constexpr Real kLnEps = 1e-5;
}

Mat layer_norm_rows(const Mat& x, const Vec& gamma, const Vec& beta, LayerNormCache* cache) {
  if (x.cols() != gamma.size() || x.cols() != beta.size())
    throw std::invalid_argument("layer_norm_rows: parameter dimension mismatch");
  const Real n = static_cast<Real>(x.cols());
  Vec mean = x.rowwise().mean();
  Mat centered = x.colwise() - mean;
  Vec var = centered.array().square().rowwise().sum() / n;
  Vec inv_std = (var.array() + kLnEps).rsqrt();
  Mat xhat = centered.array().colwise() * inv_std.array();
  Mat y = (xhat.array().rowwise() * gamma.transpose().array()).rowwise() +
          beta.transpose().array();
  if (cache) {
    cache->xhat = xhat;
    cache->inv_std = inv_std;
  }
  return y;
}

Mat layer_norm_rows_backward(const LayerNormCache& cache, const Vec& gamma, const Mat& dy,
                             Vec& dgamma, Vec& dbeta) {
  const Mat& xhat = cache.xhat;
  const Real n = static_cast<Real>(xhat.cols());
  dgamma += (dy.array() * xhat.array()).colwise().sum().transpose().matrix();
  dbeta += dy.colwise().sum().transpose();

  Mat dxhat = dy.array().rowwise() * gamma.transpose().array();
  Vec m1 = dxhat.rowwise().mean();
  Vec m2 = (dxhat.array() * xhat.array()).rowwise().sum() / n;
  Mat dx = ((dxhat.colwise() - m1).array() - xhat.array().colwise() * m2.array());
  return dx.array().colwise() * cache.inv_std.array();
}

Mat linear_backward(const Mat& x, const Mat& w, const Mat& dy, Mat& dw, Vec& db) {
  dw += dy.transpose() * x;
  db += dy.colwise().sum().transpose();
  return dy * w;
}

}  // namespace tvis::nn
