#include "tailaudit/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

namespace tailaudit {
namespace {

TEST(Rng, SameSeedSameStream) {
  RngStream a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
  }
}

TEST(Rng, ChildStreamsDifferByTag) {
  RngStream a = RngStream::child(42, "alpha");
  RngStream b = RngStream::child(42, "beta");
  EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Rng, MixSeedSpreadsAdjacentStreams) {
  EXPECT_NE(mix_seed(0, 0), mix_seed(0, 1));
  EXPECT_NE(mix_seed(0, 0), mix_seed(1, 0));
}

TEST(Rng, Uniform01Range) {
  RngStream rng(7);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, NormalMoments) {
  RngStream rng(11);
  const int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(var, 1.0, 0.02);
}

TEST(Rng, BetaMomentsAndSupport) {
  RngStream rng(13);
  const int n = 100000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.beta(2.0, 5.0);
    ASSERT_GT(x, 0.0);
    ASSERT_LT(x, 1.0);
    sum += x;
  }
  EXPECT_NEAR(sum / n, 2.0 / 7.0, 0.005);
}

TEST(Rng, IndexStaysInBounds) {
  RngStream rng(17);
  for (int i = 0; i < 10000; ++i) {
    ASSERT_LT(rng.index(7), 7u);
  }
  EXPECT_EQ(rng.index(1), 0u);
}

TEST(Rng, ShuffleIsDeterministicPermutation) {
  std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> v2 = v1;
  RngStream a(23), b(23);
  a.shuffle(v1);
  b.shuffle(v2);
  EXPECT_EQ(v1, v2);
  std::vector<int> sorted = v1;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, (std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8}));
}

}  // namespace
}  // namespace tailaudit
