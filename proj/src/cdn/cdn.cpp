#include "tvis/cdn/cdn.hpp"

#include "tvis/core/box.hpp"

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>

namespace tvis::cdn {

namespace {

void check_noise(const NoiseConfig& cfg) {
  if (cfg.lambda_pos < 0 || cfg.lambda_pos >= cfg.lambda_neg)
    throw std::invalid_argument("NoiseConfig: requires 0 <= lambda_pos < lambda_neg");
  if (cfg.flip_prob < 0 || cfg.flip_prob > 1)
    throw std::invalid_argument("NoiseConfig: flip_prob must be in [0,1]");
  if (cfg.groups < 1) throw std::invalid_argument("NoiseConfig: groups must be >= 1");
}

BBox jitter_box(const BBox& box, Real lambda, std::mt19937_64& rng) {
  std::uniform_real_distribution<Real> unit(-1.0, 1.0);
  // Draws happen unconditionally so positives and negatives consume the same
  // number of random values per query.
  const Real dx = unit(rng), dy = unit(rng), sx = unit(rng), sy = unit(rng);
  const Real w = box.x2 - box.x1, h = box.y2 - box.y1;
  const Real cx = 0.5 * (box.x1 + box.x2) + dx * (lambda / 2.0) * w;
  const Real cy = 0.5 * (box.y1 + box.y2) + dy * (lambda / 2.0) * h;
  const Real nw = std::max(w * (1.0 + sx * lambda), 0.02 * w);
  const Real nh = std::max(h * (1.0 + sy * lambda), 0.02 * h);
  BBox out;
  out.x1 = cx - nw / 2.0;
  out.x2 = cx + nw / 2.0;
  out.y1 = cy - nh / 2.0;
  out.y2 = cy + nh / 2.0;
  return clamp_box(out);
}

int group_count(const std::vector<CdnQuery>& queries) {
  int g = 0;
  for (const auto& q : queries) g = std::max(g, q.group + 1);
  return g;
}

// Blend toward a random direction: lambda * scale = 1 replaces the
// appearance entirely, so heavy noise destroys the object identity rather
// than merely offsetting it.
Vec jitter_appearance(const Vec& appearance, Real lambda, Real scale, std::mt19937_64& rng) {
  if (appearance.size() == 0) return appearance;
  std::normal_distribution<Real> gauss(0.0, 1.0);
  Vec dir(appearance.size());
  for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = gauss(rng);
  const Real norm = dir.norm();
  if (norm < 1e-12 || lambda == 0) return appearance;
  const Real mix = std::min<Real>(1.0, lambda * scale);
  return (1.0 - mix) * appearance + (mix * appearance.norm() / norm) * dir;
}

}  // namespace

std::vector<CdnQuery> gen_cdn_queries(const std::vector<GtObjectRef>& gt,
                                      const NoiseConfig& cfg, int num_classes,
                                      std::uint64_t seed) {
  check_noise(cfg);
  if (num_classes < 1) throw std::invalid_argument("gen_cdn_queries: num_classes must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> coin(0.0, 1.0);

  std::vector<CdnQuery> out;
  out.reserve(2 * static_cast<std::size_t>(cfg.groups) * gt.size());
  for (int g = 0; g < cfg.groups; ++g) {
    for (const GtObjectRef& obj : gt) {
      CdnQuery pos;
      pos.polarity = Polarity::kPositive;
      pos.group = g;
      pos.source_track = obj.track_id;
      const BBox jittered = jitter_box(obj.bbox, cfg.lambda_pos, rng);
      // lambda 0 must reproduce the ground-truth box bit-exactly
      pos.noised_bbox = cfg.lambda_pos == 0 ? obj.bbox : jittered;
      pos.noised_class = obj.class_id;
      pos.noised_appearance =
          jitter_appearance(obj.appearance, cfg.lambda_pos, cfg.appearance_scale, rng);
      out.push_back(std::move(pos));

      CdnQuery neg;
      neg.polarity = Polarity::kNegative;
      neg.group = g;
      neg.source_track = obj.track_id;
      neg.noised_bbox = jitter_box(obj.bbox, cfg.lambda_neg, rng);
      neg.noised_class = obj.class_id;
      neg.noised_appearance =
          jitter_appearance(obj.appearance, cfg.lambda_neg, cfg.appearance_scale, rng);
      if (coin(rng) < cfg.flip_prob && num_classes > 1) {
        std::uniform_int_distribution<int> pick(0, num_classes - 2);
        int c = pick(rng);
        if (c >= obj.class_id) ++c;
        neg.noised_class = c;
      }
      out.push_back(std::move(neg));
    }
  }
  return out;
}

std::vector<assoc::PairSet> pair_association_cdn(const std::vector<CdnQuery>& key_queries,
                                                 const std::vector<CdnQuery>& ref_queries) {
  if (!key_queries.empty() && !ref_queries.empty() &&
      group_count(key_queries) != group_count(ref_queries))
    throw std::invalid_argument("pair_association_cdn: group count mismatch between frames");

  std::vector<assoc::PairSet> out;
  for (std::size_t a = 0; a < key_queries.size(); ++a) {
    if (key_queries[a].polarity != Polarity::kPositive) continue;
    assoc::PairSet ps;
    ps.anchor = static_cast<int>(a);
    const int track = key_queries[a].source_track;
    for (std::size_t r = 0; r < ref_queries.size(); ++r) {
      const CdnQuery& q = ref_queries[r];
      if (q.source_track == track) {
        // Same tracklet: positives pair up, the negative counterpart is
        // excluded entirely (it may still resemble the object).
        if (q.polarity == Polarity::kPositive) ps.positives.push_back(static_cast<int>(r));
      } else {
        ps.negatives.push_back(static_cast<int>(r));
      }
    }
    out.push_back(std::move(ps));
  }
  return out;
}

std::vector<CdnTracklet> build_temporal_cdn_tracklets(
    const std::vector<CdnQuery>& key_queries, const std::vector<CdnQuery>& ref_queries) {
  if (!key_queries.empty() && !ref_queries.empty() &&
      group_count(key_queries) != group_count(ref_queries))
    throw std::invalid_argument("build_temporal_cdn_tracklets: group count mismatch");

  std::set<int> tracks;
  for (const auto& q : key_queries) tracks.insert(q.source_track);
  for (const auto& q : ref_queries) tracks.insert(q.source_track);
  const int groups = std::max(group_count(key_queries), group_count(ref_queries));

  auto find_query = [](const std::vector<CdnQuery>& qs, int track, int group, Polarity pol) {
    for (std::size_t i = 0; i < qs.size(); ++i)
      if (qs[i].source_track == track && qs[i].group == group && qs[i].polarity == pol)
        return static_cast<int>(i);
    return -1;
  };

  std::vector<CdnTracklet> out;
  for (int track : tracks) {
    for (int g = 0; g < groups; ++g) {
      CdnTracklet pos;
      pos.track_id = track;
      pos.group = g;
      pos.positive = true;
      pos.key_index = find_query(key_queries, track, g, Polarity::kPositive);
      pos.ref_index = find_query(ref_queries, track, g, Polarity::kPositive);
      out.push_back(pos);

      CdnTracklet neg;
      neg.track_id = track;
      neg.group = g;
      neg.positive = false;
      neg.key_index = find_query(key_queries, track, g, Polarity::kNegative);
      neg.ref_index = find_query(ref_queries, track, g, Polarity::kNegative);
      out.push_back(neg);
    }
  }
  return out;
}

}  // namespace tvis::cdn
