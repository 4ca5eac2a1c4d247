#include <gtest/gtest.h>

#include <stdexcept>
#include <vector>

#include "mcb/parallel.hpp"
#include "mcb/random.hpp"
#include "mcb/stats.hpp"

namespace mcb {
namespace {

TEST(DeriveSeed, DependsOnEveryComponent) {
  const auto base = derive_seed(7, "chain", 3);
  EXPECT_EQ(base, derive_seed(7, "chain", 3));
  EXPECT_NE(base, derive_seed(8, "chain", 3));
  EXPECT_NE(base, derive_seed(7, "train", 3));
  EXPECT_NE(base, derive_seed(7, "chain", 4));
}

TEST(DeriveSeed, IsUsableAtCompileTime) {
  static_assert(derive_seed(1, "x", 2) == derive_seed(1, "x", 2));
  static_assert(tag_hash("") == 0xCBF29CE484222325ULL);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.uniform(), b.uniform());
    EXPECT_EQ(a.normal(), b.normal());
  }
}

TEST(SampleCategorical, NeverReturnsZeroMassCategory) {
  Rng rng(1);
  const std::vector<double> probs{0.0, 0.3, 0.0, 0.7, 0.0};
  for (int i = 0; i < 2000; ++i) {
    const auto k = sample_categorical(probs, rng);
    EXPECT_TRUE(k == 1 || k == 3);
  }
}

TEST(SampleCategorical, AcceptsUnnormalizedWeights) {
  Rng rng(2);
  const std::vector<double> weights{1.0, 3.0};
  int ones = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) ones += sample_categorical(weights, rng) == 1;
  const double p = static_cast<double>(ones) / n;
  EXPECT_NEAR(p, 0.75, 4.0 * std::sqrt(0.75 * 0.25 / n));
}

TEST(SampleCategorical, RejectsEmptyMass) {
  Rng rng(3);
  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_THROW(sample_categorical(zeros, rng), std::invalid_argument);
}

TEST(RunningStats, MergeMatchesSequentialPush) {
  Rng rng(4);
  RunningStats all, left, right;
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.normal() * 3.0 + 1.0;
    all.push(x);
    (i < 377 ? left : right).push(x);
  }
  left.merge(right);
  EXPECT_EQ(left.count(), all.count());
  EXPECT_NEAR(left.mean(), all.mean(), 1e-12);
  EXPECT_NEAR(left.variance(), all.variance(), 1e-10);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { ++hits[i]; }, 4);
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(ParallelFor, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(
                   100, [](std::size_t i) {
                     if (i == 57) throw std::runtime_error("boom");
                   },
                   3),
               std::runtime_error);
}

}  // namespace
}  // namespace mcb
