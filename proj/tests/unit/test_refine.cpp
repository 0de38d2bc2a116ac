#include "tvis/refine/refiner.hpp"

#include "tvis/core/mask.hpp"
#include "tvis/refine/window.hpp"

#include <doctest.h>

#include <random>

using namespace tvis;
using namespace tvis::refine;

namespace {

Tracklet make_tracklet(int id, const std::vector<std::pair<int, Vec>>& slots) {
  Tracklet t;
  t.track_id = id;
  for (const auto& [frame, e] : slots) {
    FrameDetection d;
    d.frame_index = frame;
    d.embedding = e;
    t.slots[frame].detection = std::move(d);
  }
  return t;
}

Vec randv(int n, std::mt19937_64& rng) {
  std::normal_distribution<Real> g(0, 1);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

}  // namespace

TEST_CASE("assemble_window covers the full window when the tracklet does") {
  std::mt19937_64 rng(1);
  std::vector<std::pair<int, Vec>> slots;
  for (int t = 0; t < 10; ++t) slots.emplace_back(t, randv(4, rng));
  Tracklet tr = make_tracklet(1, slots);

  AssembledWindow w = assemble_window(tr, 9, 10, 4);
  CHECK(w.length() == 10);
  CHECK(w.zero_fill.count() == 0);
  CHECK(w.frame_indices(0) == 0);
  CHECK(w.frame_indices(9) == 9);
}

TEST_CASE("missing frames become zero slots, not omissions") {
  std::mt19937_64 rng(2);
  Vec a = randv(4, rng), c = randv(4, rng);
  Tracklet tr = make_tracklet(1, {{0, a}, {2, c}});

  AssembledWindow w = assemble_window(tr, 2, 3, 4);
  CHECK(w.length() == 3);
  CHECK_FALSE(w.zero_fill(0));
  CHECK(w.zero_fill(1));
  CHECK_FALSE(w.zero_fill(2));
  CHECK(w.embeddings.row(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("windows truncate at the clip start") {
  std::mt19937_64 rng(3);
  Tracklet tr = make_tracklet(1, {{0, randv(4, rng)}, {1, randv(4, rng)}, {2, randv(4, rng)}});
  AssembledWindow w = assemble_window(tr, 2, 10, 4);
  CHECK(w.length() == 3);  // frames 0..2 only
}

TEST_CASE("a window with no detection anywhere is an error") {
  std::mt19937_64 rng(4);
  Tracklet tr = make_tracklet(1, {{0, randv(4, rng)}});
  CHECK_THROWS(assemble_window(tr, 20, 5, 4));
  CHECK_THROWS(assemble_window(tr, 0, 0, 4));
}

TEST_CASE("prediction heads: zero weights give sigmoid(0) scores and empty masks") {
  RefineHeads heads;
  heads.cls_w = Mat::Zero(3, 4);
  heads.cls_b = Vec::Zero(3);
  heads.kernel_w = Mat::Zero(2, 4);
  heads.kernel_b = Vec::Zero(2);

  Vec e = Vec::Ones(4);
  ClassScores s = predict_class(e, heads);
  for (int i = 0; i < 3; ++i) CHECK(s.scores(i) == doctest::Approx(0.5));

  FeatureMap fm;
  fm.height = 2;
  fm.width = 2;
  fm.data = Mat::Ones(2, 4);
  Mat probs = predict_mask_probs(e, fm, heads);
  CHECK((probs.array() == 0.5).all());
  // ties round down: probability exactly 0.5 is background
  CHECK(binarize_mask(probs).cast<int>().sum() == 0);
  BinaryMask mask = predict_mask(e, fm, heads, 8, 8);
  CHECK(mask.empty_mask());
}

TEST_CASE("a kernel aligned with object features recovers the support") {
  RefineHeads heads;
  heads.cls_w = Mat::Zero(1, 2);
  heads.cls_b = Vec::Zero(1);
  heads.kernel_w = Mat::Identity(2, 2);
  heads.kernel_b = Vec::Zero(2);

  FeatureMap fm;
  fm.height = 2;
  fm.width = 2;
  fm.data = Mat(2, 4);
  // feature = +e at object pixels (0,0),(1,1); -e elsewhere
  Vec dir(2);
  dir << 1.0, 0.5;
  fm.data.col(fm.pixel(0, 0)) = dir;
  fm.data.col(fm.pixel(1, 1)) = dir;
  fm.data.col(fm.pixel(1, 0)) = -dir;
  fm.data.col(fm.pixel(0, 1)) = -dir;

  Vec e = dir;  // kernel = identity * e = dir
  Mat probs = predict_mask_probs(e, fm, heads);
  CHECK(probs(0, 0) > 0.5);
  CHECK(probs(1, 1) > 0.5);
  CHECK(probs(1, 0) < 0.5);
  CHECK(probs(0, 1) < 0.5);
  CHECK((probs.array() > 0.0).all());
  CHECK((probs.array() < 1.0).all());

  MaskGrid grid = rle_decode(predict_mask(e, fm, heads, 4, 4));
  CHECK(grid(0, 0) == 1);
  CHECK(grid(1, 1) == 1);  // nearest upsample: 2x2 block per cell
  CHECK(grid(2, 2) == 1);
  CHECK(grid(0, 2) == 0);
}

TEST_CASE("offline refinement with zeroed branches is the identity on embeddings") {
  std::mt19937_64 rng(5);
  nn::AttentionDims dims{8, 2, 16};
  auto params = nn::AttentionBlockParams::identity(dims);

  std::vector<std::pair<int, Vec>> slots;
  for (int t = 0; t < 6; ++t)
    if (t != 3) slots.emplace_back(t, randv(8, rng));
  std::vector<Tracklet> tracklets = {make_tracklet(1, slots)};

  refine_tracklets_offline(tracklets, 4, params);
  for (const auto& [t, slot] : tracklets[0].slots) {
    REQUIRE(slot.refined.has_value());
    if (slot.detection)
      CHECK((*slot.refined - slot.detection->embedding).cwiseAbs().maxCoeff() == 0.0);
    else
      CHECK(slot.refined->cwiseAbs().maxCoeff() == 0.0);  // zero-fill slot passes through
  }
}

TEST_CASE("tracklets are refined independently of each other") {
  std::mt19937_64 rng(6);
  nn::AttentionDims dims{8, 2, 16};
  auto params = nn::AttentionBlockParams::random(dims, rng);

  std::vector<std::pair<int, Vec>> s1, s2;
  for (int t = 0; t < 5; ++t) s1.emplace_back(t, randv(8, rng));
  for (int t = 0; t < 5; ++t) s2.emplace_back(t, randv(8, rng));

  std::vector<Tracklet> both = {make_tracklet(1, s1), make_tracklet(2, s2)};
  std::vector<Tracklet> alone = {make_tracklet(1, s1)};
  refine_tracklets_offline(both, 3, params);
  refine_tracklets_offline(alone, 3, params);

  for (int t = 0; t < 5; ++t)
    CHECK((*both[0].slots[t].refined - *alone[0].slots[t].refined).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("online refinement: first frame, W=1, and offline agreement") {
  std::mt19937_64 rng(7);
  nn::AttentionDims dims{8, 2, 16};
  auto params = nn::AttentionBlockParams::random(dims, rng);

  // W=1: output depends only on the current embedding
  {
    OnlineTrackState st;
    Vec e = randv(8, rng);
    Vec r1 = online_refine_slot(st, 4, &e, params, 1, true, 8);
    OnlineTrackState st2;
    Vec r2 = online_refine_slot(st2, 4, &e, params, 1, false, 8);
    CHECK((r1 - r2).cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.buffer.empty());
  }

  // feedback=off online equals offline for frames with full past windows
  const int W = 3, T = 8;
  std::vector<std::pair<int, Vec>> slots;
  for (int t = 0; t < T; ++t)
    if (t != 4) slots.emplace_back(t, randv(8, rng));
  std::vector<Tracklet> tracklets = {make_tracklet(1, slots)};
  refine_tracklets_offline(tracklets, W, params);

  OnlineTrackState st;
  for (int t = 0; t < T; ++t) {
    const Vec* raw = nullptr;
    Vec e;
    auto it = tracklets[0].slots.find(t);
    if (it != tracklets[0].slots.end() && it->second.detection) {
      e = it->second.detection->embedding;
      raw = &e;
    }
    Vec refined = online_refine_slot(st, t, raw, params, W, false, 8);
    if (t >= W - 1) {
      REQUIRE(refined.size() == 8);
      CHECK((refined - *tracklets[0].slots[t].refined).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}
