#include "tvis/nn/attention.hpp"

#include "tvis/nn/gradcheck.hpp"
#include "tvis/nn/ops.hpp"

#include <doctest.h>

#include <random>

using namespace tvis;

namespace {

Mat random_mat(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<Real> g(0, 1);
  Mat m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = g(rng);
  return m;
}

}  // namespace

TEST_CASE("default block dimensions") {
  nn::AttentionDims dims;
  CHECK(dims.embed_dim == 256);
  CHECK(dims.num_heads == 8);
  CHECK(dims.ff_dim == 1024);
}

TEST_CASE("zeroed branches leave the input untouched") {
  std::mt19937_64 rng(21);
  const nn::AttentionDims dims{8, 2, 16};
  nn::AttentionBlockParams p = nn::AttentionBlockParams::identity(dims);
  Mat x = random_mat(4, 8, rng);
  IVec frames(4);
  frames << 0, 1, 2, 3;
  Mat y = nn::attention_block_forward(x, frames, BoolArr(), p);
  CHECK(y == x);  // exact, bit for bit

  // zeroing everything (including layer-norm scales) is also the identity
  nn::AttentionBlockParams z = nn::AttentionBlockParams::zeros(dims);
  CHECK(nn::attention_block_forward(x, frames, BoolArr(), z) == x);
}

TEST_CASE("single-token window with identity projections") {
  const nn::AttentionDims dims{4, 1, 8};
  nn::AttentionBlockParams p = nn::AttentionBlockParams::identity(dims);
  p.wq = p.wk = p.wv = p.wo = Mat::Identity(4, 4);

  Mat x(1, 4);
  x << 0.3, -1.2, 0.8, 2.0;
  IVec frames(1);
  frames << 5;
  // attention over one token is that token; output = x + LN(x + pe)
  Mat xp = x + nn::positional_encoding_rows(frames, 4);
  Mat expected = x + nn::layer_norm_rows(xp, p.ln1_gamma, p.ln1_beta);
  Mat y = nn::attention_block_forward(x, frames, BoolArr(), p);
  CHECK((y - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("permutation equivariance holds exactly without positional encodings") {
  std::mt19937_64 rng(33);
  const nn::AttentionDims dims{8, 2, 12};
  nn::AttentionBlockParams p = nn::AttentionBlockParams::random(dims, rng);
  Mat x = random_mat(5, 8, rng);
  IVec frames(5);
  frames << 0, 1, 2, 3, 4;

  std::vector<int> perm = {3, 0, 4, 1, 2};
  Mat xp(5, 8);
  for (int i = 0; i < 5; ++i) xp.row(i) = x.row(perm[i]);

  Mat y = nn::attention_block_forward(x, frames, BoolArr(), p, false);
  Mat yp = nn::attention_block_forward(xp, frames, BoolArr(), p, false);
  for (int i = 0; i < 5; ++i)
    CHECK((yp.row(i) - y.row(perm[i])).cwiseAbs().maxCoeff() < 1e-10);

  // with positional encodings the equivariance is broken
  Mat y_pe = nn::attention_block_forward(x, frames, BoolArr(), p, true);
  Mat yp_pe = nn::attention_block_forward(xp, frames, BoolArr(), p, true);
  Real max_diff = 0;
  for (int i = 0; i < 5; ++i)
    max_diff = std::max(max_diff, (yp_pe.row(i) - y_pe.row(perm[i])).cwiseAbs().maxCoeff());
  CHECK(max_diff > 1e-4);
}

TEST_CASE("pad mask removes slots from the attention keys") {
  std::mt19937_64 rng(55);
  const nn::AttentionDims dims{8, 2, 12};
  nn::AttentionBlockParams p = nn::AttentionBlockParams::random(dims, rng);
  Mat x = random_mat(4, 8, rng);
  IVec frames(4);
  frames << 0, 1, 2, 3;

  BoolArr pad = BoolArr::Constant(4, false);
  pad(2) = true;
  Mat masked = nn::attention_block_forward(x, frames, pad, p);

  // changing a masked slot's content must not affect the other outputs
  Mat x2 = x;
  x2.row(2).setConstant(9.0);
  Mat masked2 = nn::attention_block_forward(x2, frames, pad, p);
  for (int i = 0; i < 4; ++i) {
    if (i == 2) continue;
    CHECK((masked.row(i) - masked2.row(i)).cwiseAbs().maxCoeff() < 1e-12);
  }

  CHECK_THROWS(nn::attention_block_forward(x, frames, BoolArr::Constant(4, true), p));
}

TEST_CASE("upstream of zeros yields zero gradients; residual passes identity") {
  std::mt19937_64 rng(77);
  const nn::AttentionDims dims{8, 2, 12};
  nn::AttentionBlockParams p = nn::AttentionBlockParams::random(dims, rng);
  Mat x = random_mat(3, 8, rng);
  IVec frames(3);
  frames << 0, 1, 2;

  auto g0 = nn::attention_block_gradients(x, frames, BoolArr(), p, Mat::Zero(3, 8));
  CHECK(g0.x.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g0.params.wq.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g0.params.w2.cwiseAbs().maxCoeff() == 0.0);

  // with zeroed branches d<U,out>/dX is exactly U (identity residual)
  nn::AttentionBlockParams idp = nn::AttentionBlockParams::identity(dims);
  Mat upstream = random_mat(3, 8, rng);
  auto gid = nn::attention_block_gradients(x, frames, BoolArr(), idp, upstream);
  CHECK((gid.x - upstream).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("analytic gradients match finite differences") {
  auto results = nn::run_gradient_checks(2024, 3);
  for (const auto& r : results) {
    INFO(r.name);
    CHECK(r.max_rel_err < 1e-4);
    CHECK(r.entries_checked > 0);
  }
}

TEST_CASE("flop count grows quadratically with the window") {
  CHECK(nn::attention_flop_count(0, 256, 8, 1024) == 0);

  const auto f1 = nn::attention_flop_count(10, 256, 8, 1024);
  const auto f2 = nn::attention_flop_count(20, 256, 8, 1024);
  CHECK(f2 > 2 * f1);  // the W^2 attention term outpaces doubling

  // hand total: 4 W C^2 + 2 W^2 C + 2 W C dff
  const std::int64_t expected =
      4LL * 10 * 256 * 256 + 2LL * 10 * 10 * 256 + 2LL * 10 * 256 * 1024;
  CHECK(f1 == expected);
}
