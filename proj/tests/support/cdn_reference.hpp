#pragma once

// Literal restatement of the cross-frame denoising pair rules, used to
// cross-check the production pairing.

#include "tvis/cdn/cdn.hpp"

#include <vector>

namespace tvis::testsupport {

inline std::vector<assoc::PairSet> brute_force_cdn_pairs(const std::vector<cdn::CdnQuery>& key,
                                                         const std::vector<cdn::CdnQuery>& ref) {
  std::vector<assoc::PairSet> out;
  for (std::size_t a = 0; a < key.size(); ++a) {
    if (key[a].polarity != cdn::Polarity::kPositive) continue;
    assoc::PairSet ps;
    ps.anchor = static_cast<int>(a);
    for (std::size_t r = 0; r < ref.size(); ++r) {
      const bool same_track = ref[r].source_track == key[a].source_track;
      const bool ref_positive = ref[r].polarity == cdn::Polarity::kPositive;
      if (same_track && ref_positive) ps.positives.push_back(static_cast<int>(r));
      if (!same_track) ps.negatives.push_back(static_cast<int>(r));
      // a positive is never paired with its own negative counterpart
    }
    out.push_back(ps);
  }
  return out;
}

}  // namespace tvis::testsupport
