#include "tvis/assoc/tracker.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace tvis;
using namespace tvis::assoc;

namespace {

std::vector<Vec> unit_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  std::vector<Vec> out;
  for (const auto& r : rows) {
    Vec v(static_cast<Eigen::Index>(r.size()));
    Eigen::Index i = 0;
    for (Real x : r) v(i++) = x;
    out.push_back(v.normalized());
  }
  return out;
}

}  // namespace

TEST_CASE("exact match is assigned to its tracklet") {
  AssocParams params;
  AssocMemory memory;
  memory.entries.push_back({1, unit_rows({{1, 0}})[0], 0, 0.9});
  memory.next_track_id = 2;

  auto assignments = associate_frame(unit_rows({{1, 0}}), {0.9}, memory, params, 1);
  REQUIRE(assignments.size() == 1);
  CHECK(assignments[0].track_id == 1);
  CHECK_FALSE(assignments[0].is_new);
}

TEST_CASE("orthogonal memory entries recover the permutation") {
  AssocParams params;
  AssocMemory memory;
  auto mem = unit_rows({{0, 1}, {1, 0}});
  memory.entries.push_back({1, mem[0], 0, 0.9});
  memory.entries.push_back({2, mem[1], 0, 0.9});
  memory.next_track_id = 3;

  auto dets = unit_rows({{1, 0}, {0, 1}});
  auto assignments = associate_frame(dets, {0.9, 0.9}, memory, params, 1);
  CHECK(assignments[0].track_id == 2);
  CHECK(assignments[1].track_id == 1);

  // brute force over both possible assignments agrees
  Mat cosine(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) cosine(i, j) = dets[i].dot(mem[j]);
  const Real straight = cosine(0, 0) + cosine(1, 1);
  const Real swapped = cosine(0, 1) + cosine(1, 0);
  CHECK(swapped > straight);
}

TEST_CASE("below-threshold similarity spawns a new tracklet when confident") {
  AssocParams params;
  AssocMemory memory;
  memory.entries.push_back({1, unit_rows({{1, 0}})[0], 0, 0.9});
  memory.next_track_id = 2;

  // orthogonal detection: similarity far below tau_match
  auto assignments = associate_frame(unit_rows({{0, 1}}), {0.9}, memory, params, 1);
  CHECK(assignments[0].track_id == 2);
  CHECK(assignments[0].is_new);
  CHECK(memory.entries.size() == 2);

  // low-confidence unmatched detection is dropped
  AssocMemory memory2;
  memory2.entries.push_back({1, unit_rows({{1, 0}})[0], 0, 0.9});
  memory2.next_track_id = 2;
  auto dropped = associate_frame(unit_rows({{0, 1}}), {0.2}, memory2, params, 1);
  CHECK(dropped[0].track_id == -1);
  CHECK(memory2.entries.size() == 1);
}

TEST_CASE("memory EMA update examples") {
  AssocParams params;
  auto vecs = unit_rows({{1, 0}, {0, 1}});

  auto run = [&](Real momentum) {
    AssocMemory memory;
    memory.entries.push_back({1, vecs[0], 0, 0.9});
    std::vector<Assignment> a = {{0, 1, false}};
    AssocParams p = params;
    p.momentum = momentum;
    update_memory(memory, a, {vecs[1]}, p, 1);
    return memory.entries[0].embedding;
  };

  CHECK((run(1.0) - vecs[1]).cwiseAbs().maxCoeff() == 0.0);  // replaced
  CHECK((run(0.0) - vecs[0]).cwiseAbs().maxCoeff() == 0.0);  // untouched
  Vec half = run(0.5);
  CHECK(half(0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(half(1) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("entries retire after max_age missed frames") {
  AssocParams params;
  params.max_age = 3;
  AssocMemory memory;
  memory.entries.push_back({1, unit_rows({{1, 0}})[0], 0, 0.9});
  update_memory(memory, {}, {}, params, 3);
  CHECK(memory.entries.size() == 1);
  update_memory(memory, {}, {}, params, 4);
  CHECK(memory.entries.empty());
}

TEST_CASE("greedy matching is a partial injection and scale invariant") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<Real> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Mat scores(4, 5);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 5; ++j) scores(i, j) = u(rng);

    auto m = greedy_match(scores, 0.0);
    std::vector<int> rows, cols;
    for (auto [i, j] : m) {
      CHECK(std::count(rows.begin(), rows.end(), i) == 0);
      CHECK(std::count(cols.begin(), cols.end(), j) == 0);
      rows.push_back(i);
      cols.push_back(j);
    }

    // positive rescaling leaves the pick order unchanged
    auto scaled = greedy_match(Mat(3.7 * scores), 0.0);
    CHECK(m == scaled);
  }
}

TEST_CASE("hungarian matches the exhaustive optimum on small instances") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<Real> u(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    Mat scores(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) scores(i, j) = u(rng);

    auto m = hungarian_match(scores, 0.0);
    Real total = 0;
    for (auto [i, j] : m) total += scores(i, j);

    std::vector<int> perm = {0, 1, 2};
    Real best = -1;
    do {
      Real s = 0;
      for (int i = 0; i < 3; ++i) s += scores(i, perm[i]);
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(total == doctest::Approx(best).epsilon(1e-9));
  }
}

TEST_CASE("training-time thresholds are scaled down") {
  AssocParams p;
  AssocParams t = p.scaled_for_training();
  CHECK(t.tau_match == doctest::Approx(0.5 * p.tau_match));
  CHECK(t.tau_det == doctest::Approx(0.5 * p.tau_det));
  CHECK(t.momentum == p.momentum);
  CHECK(t.max_age == p.max_age);
}

TEST_CASE("bi-softmax of an exact one-hot match saturates near one") {
  Mat cosine(1, 4);
  cosine << 1.0, 0.0, 0.0, 0.0;
  Mat sim = bi_softmax_similarity(cosine, 10.0);
  CHECK(sim(0, 0) > 0.99);
  CHECK(sim(0, 1) < 0.01);
}
