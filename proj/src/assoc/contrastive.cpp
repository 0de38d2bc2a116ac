#include "tvis/assoc/contrastive.hpp"

#include <cmath>
#include <stdexcept>

namespace tvis::assoc {

namespace {
constexpr Real kNormEps = 1e-12;
}

Vec project_contrastive(const Vec& e, const ContrastiveHead& head) {
  if (e.size() != head.w.cols())
    throw std::invalid_argument("project_contrastive: embedding dimension mismatch");
  Vec v = head.w * e;
  const Real n = v.norm();
  if (n < kNormEps) return Vec::Zero(head.w.rows());
  return v / n;
}

Vec project_contrastive_backward(const Vec& e, const ContrastiveHead& head, const Vec& dproj,
                                 Mat& dw) {
  Vec v = head.w * e;
  const Real n = v.norm();
  if (n < kNormEps) return Vec::Zero(e.size());  // degenerate: no gradient
  Vec vhat = v / n;
  Vec dv = (dproj - vhat * vhat.dot(dproj)) / n;
  dw += dv * e.transpose();
  return head.w.transpose() * dv;
}

std::vector<PairSet> build_pairs(const std::vector<int>& key_tracks,
                                 const std::vector<int>& ref_tracks) {
  std::vector<PairSet> out;
  out.reserve(key_tracks.size());
  for (std::size_t i = 0; i < key_tracks.size(); ++i) {
    PairSet ps;
    ps.anchor = static_cast<int>(i);
    for (std::size_t j = 0; j < ref_tracks.size(); ++j) {
      if (ref_tracks[j] == key_tracks[i])
        ps.positives.push_back(static_cast<int>(j));
      else
        ps.negatives.push_back(static_cast<int>(j));
    }
    out.push_back(std::move(ps));
  }
  return out;
}

Real contrastive_loss(const Vec& v, const PairSet& pairs, const std::vector<Vec>& embeddings) {
  if (pairs.positives.empty() || pairs.negatives.empty()) return 0;
  // sum_{p,n} exp(d_n - d_p) factors into (sum_n exp d_n)(sum_p exp -d_p)
  Real en = 0, ep = 0;
  for (int n : pairs.negatives) en += std::exp(v.dot(embeddings.at(n)));
  for (int p : pairs.positives) ep += std::exp(-v.dot(embeddings.at(p)));
  return std::log1p(en * ep);
}

Real contrastive_loss_grad(const Vec& v, const PairSet& pairs,
                           const std::vector<Vec>& embeddings, Vec& dv,
                           std::vector<Vec>& dembeddings) {
  if (dv.size() != v.size()) dv = Vec::Zero(v.size());
  if (dembeddings.size() != embeddings.size()) {
    dembeddings.assign(embeddings.size(), Vec());
    for (std::size_t i = 0; i < embeddings.size(); ++i)
      dembeddings[i] = Vec::Zero(embeddings[i].size());
  }
  if (pairs.positives.empty() || pairs.negatives.empty()) return 0;

  Real en = 0, ep = 0;
  for (int n : pairs.negatives) en += std::exp(v.dot(embeddings.at(n)));
  for (int p : pairs.positives) ep += std::exp(-v.dot(embeddings.at(p)));
  const Real s = en * ep;
  const Real dscale = 1.0 / (1.0 + s);

  for (int n : pairs.negatives) {
    const Real coeff = dscale * ep * std::exp(v.dot(embeddings[n]));
    dv += coeff * embeddings[n];
    dembeddings[n] += coeff * v;
  }
  for (int p : pairs.positives) {
    const Real coeff = -dscale * en * std::exp(-v.dot(embeddings[p]));
    dv += coeff * embeddings[p];
    dembeddings[p] += coeff * v;
  }
  return std::log1p(s);
}

}  // namespace tvis::assoc
