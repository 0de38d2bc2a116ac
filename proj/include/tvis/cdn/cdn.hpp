#pragma once

#include "tvis/assoc/contrastive.hpp"
#include "tvis/core/types.hpp"

#include <cstdint>
#include <vector>

namespace tvis::cdn {

enum class Polarity { kPositive, kNegative };

/// Training-only query derived from one ground-truth object by noising its
/// box, class, and appearance vector. Never used at inference.
struct CdnQuery {
  Polarity polarity = Polarity::kPositive;
  int group = 0;
  int source_track = -1;
  BBox noised_bbox;
  int noised_class = 0;
  Vec noised_appearance;  // empty when the source carries no appearance
  Vec embedding;          // filled by the query encoder
};

struct NoiseConfig {
  Real lambda_pos = 0.4;       // noise scale for positives
  Real lambda_neg = 1.0;       // noise scale for negatives
  Real flip_prob = 0.5;        // label flip probability for negatives
  Real appearance_scale = 0.8; // appearance corruption per unit lambda (1 = full replacement)
  int groups = 5;
  bool enable_association_cdn = true;
  bool enable_temporal_cdn = true;
  bool mirror_association = false;  // also anchor reference positives on key queries
};

/// Minimal ground-truth view needed for query generation. The appearance
/// vector stands in for what a decoder would read off the image around the
/// noised box.
struct GtObjectRef {
  int track_id = -1;
  BBox bbox;
  int class_id = 0;
  Vec appearance;
};

/// Exactly 2 * groups * |gt| queries, one positive and one negative per object
/// per group. Positives jitter with lambda_pos, negatives with lambda_neg plus
/// label flips. Deterministic given the seed.
std::vector<CdnQuery> gen_cdn_queries(const std::vector<GtObjectRef>& gt,
                                      const NoiseConfig& cfg, int num_classes,
                                      std::uint64_t seed);

/// Contrastive pairs for the cross-frame denoising queries. Anchors are the
/// key-frame positives; positives are same-track reference positives across
/// groups, negatives are all other tracks' reference queries of both
/// polarities. The anchor track's own reference negatives appear nowhere.
/// Pair indices refer into ref_queries. Throws on group-count mismatch.
std::vector<assoc::PairSet> pair_association_cdn(const std::vector<CdnQuery>& key_queries,
                                                 const std::vector<CdnQuery>& ref_queries);

/// Two-slot training tracklet of denoising queries. Index -1 marks a
/// zero-fill slot (track absent from that frame). Positive tracklets target
/// the track's ground truth; negative tracklets target empty masks and zero
/// class confidence.
struct CdnTracklet {
  int track_id = -1;
  int group = 0;
  bool positive = true;
  int key_index = -1;
  int ref_index = -1;
};

std::vector<CdnTracklet> build_temporal_cdn_tracklets(const std::vector<CdnQuery>& key_queries,
                                                      const std::vector<CdnQuery>& ref_queries);

}  // namespace tvis::cdn
