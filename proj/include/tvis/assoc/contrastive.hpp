#pragma once

#include "tvis/core/types.hpp"

#include <vector>

namespace tvis::assoc {

/// Projection from object embeddings to the association embedding space.
struct ContrastiveHead {
  Mat w;  // contrastive_dim x embed_dim

  int contrastive_dim() const { return static_cast<int>(w.rows()); }
  int embed_dim() const { return static_cast<int>(w.cols()); }
};

/// Positive / negative reference indices for one anchor.
struct PairSet {
  int anchor = -1;
  std::vector<int> positives;
  std::vector<int> negatives;
};

/// L2-normalized projection. A (near-)zero projection is degenerate and is
/// returned as the zero vector.
Vec project_contrastive(const Vec& e, const ContrastiveHead& head);

/// Backward through normalization and projection; accumulates dW and returns
/// d(loss)/d(e) given d(loss)/d(projection).
Vec project_contrastive_backward(const Vec& e, const ContrastiveHead& head, const Vec& dproj,
                                 Mat& dw);

/// For each key object, positives are reference objects with the same track
/// id and negatives all remaining reference objects.
std::vector<PairSet> build_pairs(const std::vector<int>& key_tracks,
                                 const std::vector<int>& ref_tracks);

/// log(1 + sum_{k+} sum_{k-} exp(v.k- - v.k+)); zero when either set is empty.
Real contrastive_loss(const Vec& v, const PairSet& pairs, const std::vector<Vec>& embeddings);

/// Accumulates gradients w.r.t. the anchor and the referenced embeddings.
Real contrastive_loss_grad(const Vec& v, const PairSet& pairs,
                           const std::vector<Vec>& embeddings, Vec& dv,
                           std::vector<Vec>& dembeddings);

}  // namespace tvis::assoc
