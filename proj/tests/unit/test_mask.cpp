#include "tvis/core/mask.hpp"

#include "../support/generators.hpp"

#include <doctest.h>

#include <random>

using namespace tvis;

TEST_CASE("rle_encode matches hand-enumerated column-major runs") {
  MaskGrid zeros = MaskGrid::Zero(2, 2);
  CHECK(rle_encode(zeros).counts == std::vector<std::uint32_t>{4});

  MaskGrid ones = MaskGrid::Constant(2, 2, 1);
  CHECK(rle_encode(ones).counts == std::vector<std::uint32_t>{0, 4});

  // only pixel (row 0, col 1): column-major order 0,0,1,0
  MaskGrid g = MaskGrid::Zero(2, 2);
  g(0, 1) = 1;
  CHECK(rle_encode(g).counts == std::vector<std::uint32_t>{2, 1, 1});
}

TEST_CASE("rle_decode inverts the encode examples") {
  BinaryMask zeros{2, 2, {4}};
  CHECK(rle_decode(zeros) == MaskGrid::Zero(2, 2));

  BinaryMask ones{2, 2, {0, 4}};
  CHECK(rle_decode(ones) == MaskGrid::Constant(2, 2, 1));

  BinaryMask single{2, 2, {2, 1, 1}};
  MaskGrid expected = MaskGrid::Zero(2, 2);
  expected(0, 1) = 1;
  CHECK(rle_decode(single) == expected);
}

TEST_CASE("rle_decode rejects malformed counts") {
  BinaryMask bad{2, 2, {3}};
  CHECK_THROWS(rle_decode(bad));
}

TEST_CASE("round-trip is bit-exact on random grids") {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> dim(1, 40);
  for (int i = 0; i < 300; ++i) {
    const int h = dim(rng), w = dim(rng);
    MaskGrid g = i % 2 == 0 ? testsupport::random_grid(h, w, rng)
                            : testsupport::random_blocky_grid(h, w, rng);
    CHECK(rle_decode(rle_encode(g)) == g);
  }
}

TEST_CASE("mask_iou hand examples") {
  MaskGrid a = MaskGrid::Zero(2, 2), b = MaskGrid::Zero(2, 2);
  a(0, 0) = a(0, 1) = 1;
  b(0, 1) = b(1, 1) = 1;
  CHECK(mask_iou(rle_encode(a), rle_encode(b)) == doctest::Approx(1.0 / 3.0));

  CHECK(mask_iou(rle_encode(a), rle_encode(a)) == 1.0);

  MaskGrid c = MaskGrid::Zero(2, 2);
  c(1, 0) = 1;
  CHECK(mask_iou(rle_encode(a), rle_encode(c)) == 0.0);

  CHECK(mask_iou(empty_mask(3, 3), empty_mask(3, 3)) == 1.0);
  CHECK_THROWS(mask_iou(empty_mask(3, 3), empty_mask(2, 3)));
}

TEST_CASE("mask_iou is symmetric and 1 iff identical") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    MaskGrid a = testsupport::random_grid(9, 7, rng);
    MaskGrid b = testsupport::random_grid(9, 7, rng);
    const BinaryMask ma = rle_encode(a), mb = rle_encode(b);
    CHECK(mask_iou(ma, mb) == mask_iou(mb, ma));
    if (a.cast<int>().sum() > 0) {
      const bool identical = a == b;
      CHECK((mask_iou(ma, mb) == 1.0) == identical);
    }
  }
}
