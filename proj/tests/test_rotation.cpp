#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "ssgan/ops.hpp"
#include "ssgan/random.hpp"
#include "ssgan/rotation.hpp"

using namespace ssgan;
using namespace ssgan::rotation;

namespace {

TensorF random_image(int64_t size, int64_t channels, uint64_t seed) {
  Rng rng(seed);
  return rng.normal_tensor<float>({size, size, channels});
}

TEST(RotationSet, FourQuarterTurnsInOrder) {
  EXPECT_EQ(RotationSet::degrees.size(), 4u);
  for (int i = 0; i < kNumRotations; ++i) {
    EXPECT_EQ(RotationSet::labels[i], i);
    EXPECT_EQ(RotationSet::degrees[i], 90 * i);
  }
}

TEST(RotateImage, TwoByTwoQuarterTurn) {
  // [[a,b],[c,d]] turned once counter-clockwise is [[b,d],[a,c]].
  const TensorF img({2, 2, 1}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(rotate_image(img, 1).storage(), (std::vector<float>{2, 4, 1, 3}));
}

TEST(RotateImage, TwoByTwoAllTurnsByIndexOracle) {
  const TensorF img({2, 2, 1}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(rotate_image(img, 2).storage(), (std::vector<float>{4, 3, 2, 1}));
  EXPECT_EQ(rotate_image(img, 3).storage(), (std::vector<float>{3, 1, 4, 2}));
}

TEST(RotateImage, ZeroTurnsIsIdentity) {
  const auto img = random_image(5, 3, 1);
  EXPECT_EQ(rotate_image(img, 0), img);
}

TEST(RotateImage, CompositionFollowsAdditionModFour) {
  const auto img = random_image(6, 2, 2);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) EXPECT_EQ(rotate_image(rotate_image(img, a), b), rotate_image(img, (a + b) % 4));
}

TEST(RotateImage, PreservesPixelMultiset) {
  const auto img = random_image(7, 3, 3);
  auto before = img.storage();
  std::sort(before.begin(), before.end());
  for (int r = 0; r < 4; ++r) {
    auto after = rotate_image(img, r).storage();
    std::sort(after.begin(), after.end());
    EXPECT_EQ(before, after);
  }
}

TEST(RotateImage, ChannelsMoveTogether) {
  TensorF img({3, 3, 2});
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j) {
      img.at({i, j, 0}) = static_cast<float>(10 * i + j);
      img.at({i, j, 1}) = static_cast<float>(-(10 * i + j));
    }
  const auto out = rotate_image(img, 1);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 3; ++j) EXPECT_EQ(out.at({i, j, 1}), -out.at({i, j, 0}));
}

TEST(RotateImage, RejectsNonSquare) {
  EXPECT_THROW(rotate_image(TensorF({2, 3, 1}), 1), ShapeError);
}

TEST(RotateImage, AgreesWithDifferentiableOp) {
  Rng rng(4);
  const TensorF batch = rng.normal_tensor<float>({4, 5, 5, 2});
  const TensorF out = ops::rotate(ag::VarF(batch), {0, 1, 2, 3}).value();
  const int64_t per = 5 * 5 * 2;
  for (int n = 0; n < 4; ++n) {
    TensorF img({5, 5, 2}, std::vector<float>(batch.data() + n * per, batch.data() + (n + 1) * per));
    const auto expect = rotate_image(img, n);
    EXPECT_TRUE(std::equal(expect.data(), expect.data() + per, out.data() + n * per));
  }
}

TEST(RotationBatch, SixtyFourGivesSixteenImagesInFourOrientations) {
  Rng rng(5);
  const TensorF batch = rng.normal_tensor<float>({64, 4, 4, 1});
  const auto rb = make_rotation_batch(batch, Source::Real);
  EXPECT_EQ(rb.images.dim(0), 64);
  EXPECT_EQ(rb.labels.size(), 64u);
  EXPECT_EQ(rb.source, Source::Real);
  const auto plan = rotation_plan(64);
  std::vector<int64_t> distinct(plan.rows.begin(), plan.rows.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  EXPECT_EQ(distinct.size(), 16u);
  EXPECT_EQ(distinct.back(), 15);
}

TEST(RotationBatch, MinimalBatchIsOneImageFourWays) {
  Rng rng(6);
  const TensorF batch = rng.normal_tensor<float>({4, 3, 3, 2});
  const auto rb = make_rotation_batch(batch, Source::Fake);
  TensorF first({3, 3, 2}, std::vector<float>(batch.data(), batch.data() + 18));
  for (int r = 0; r < 4; ++r) {
    const auto expect = rotate_image(first, r);
    EXPECT_TRUE(std::equal(expect.data(), expect.data() + 18, rb.images.data() + r * 18));
    EXPECT_EQ(rb.labels[r], r);
  }
  EXPECT_EQ(rb.source, Source::Fake);
}

TEST(RotationBatch, EightGivesUniformHistogram) {
  const auto rb = make_rotation_batch(TensorF({8, 2, 2, 1}), Source::Real);
  std::map<int, int> hist;
  for (int l : rb.labels) ++hist[l];
  EXPECT_EQ(hist, (std::map<int, int>{{0, 2}, {1, 2}, {2, 2}, {3, 2}}));
}

TEST(RotationBatch, RejectsBatchNotDivisibleByFour) {
  EXPECT_THROW(make_rotation_batch(TensorF({6, 2, 2, 1}), Source::Real), BatchSizeError);
  EXPECT_THROW(rotation_plan(0), BatchSizeError);
}

TEST(RotationBatch, LabelsUniformForManySizes) {
  for (int64_t n = 4; n <= 128; n += 4) {
    const auto plan = rotation_plan(n);
    ASSERT_EQ(static_cast<int64_t>(plan.turns.size()), n);
    std::vector<int> count(4, 0);
    for (int t : plan.turns) ++count[t];
    for (int c : count) EXPECT_EQ(c, n / 4);
  }
}

}  // namespace
