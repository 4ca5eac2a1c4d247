#include <gtest/gtest.h>

#include <cmath>

#include "mcb/discrete_space.hpp"
#include "mcb/metrics.hpp"
#include "mcb/oracle.hpp"
#include "mcb/schedule.hpp"
#include "support.hpp"

namespace mcb {
namespace {

using testing::random_state;

TEST(UnigramEntropy, DegenerateHistograms) {
  const std::vector<TokenSequence> constant{{2, 2, 2}, {0, 0, 0}};
  EXPECT_EQ(unigram_entropy(constant), 0.0);
  const std::vector<TokenSequence> pairs{{0, 1}, {3, 2}};
  EXPECT_NEAR(unigram_entropy(pairs), std::log(2.0), 1e-15);
  EXPECT_THROW(unigram_entropy(std::vector<TokenSequence>{}), std::invalid_argument);
}

// Expected plug-in entropy of a uniform V=4, L=16 sequence, by summing over
// all count profiles (n_0, ..., n_3) with their multinomial probabilities.
double expected_profile_entropy(int vocab, int length) {
  std::vector<double> log_fact(length + 1, 0.0);
  for (int i = 1; i <= length; ++i) log_fact[i] = log_fact[i - 1] + std::log(static_cast<double>(i));
  double total = 0.0;
  std::vector<int> counts(vocab, 0);
  auto recurse = [&](auto&& self, int pos, int left) -> void {
    if (pos == vocab - 1) {
      counts[pos] = left;
      double log_p = log_fact[length] - length * std::log(static_cast<double>(vocab));
      double h = 0.0;
      for (int c : counts) {
        log_p -= log_fact[c];
        if (c > 0) {
          const double f = static_cast<double>(c) / length;
          h -= f * std::log(f);
        }
      }
      total += std::exp(log_p) * h;
      return;
    }
    for (int c = 0; c <= left; ++c) {
      counts[pos] = c;
      self(self, pos + 1, left - c);
    }
  };
  recurse(recurse, 0, length);
  return total;
}

TEST(UnigramEntropy, MatchesMultinomialProfileOracle) {
  Rng rng(1);
  std::vector<TokenSequence> samples(10000, TokenSequence(16));
  for (auto& s : samples) {
    for (auto& t : s) t = static_cast<Token>(rng.uniform() * 4);
  }
  EXPECT_NEAR(unigram_entropy(samples), expected_profile_entropy(4, 16), 0.05);
}

TEST(EmpiricalTv, Extremes) {
  std::vector<double> probs(4, 0.0);
  probs[2] = 1.0;
  const JointDist point(Shape{2, 2}, probs);
  const std::vector<TokenSequence> hit(10, TokenSequence{1, 0});
  EXPECT_EQ(empirical_tv(hit, point).value, 0.0);
  const std::vector<TokenSequence> miss(10, TokenSequence{0, 0});
  EXPECT_EQ(empirical_tv(miss, point).value, 1.0);
}

TEST(EmpiricalTv, ExactDrawsConcentrate) {
  const auto nu = JointDist::dirichlet(Shape{3, 2}, 1.0, 7);
  Rng rng(2);
  const std::size_t n = 50000;
  std::vector<TokenSequence> samples;
  for (std::size_t i = 0; i < n; ++i) samples.push_back(nu.sample(rng));
  const auto tv = empirical_tv(samples, nu);
  double expected = 0.0;
  for (double p : nu.probs()) expected += std::sqrt(p * (1 - p) / (2 * M_PI * n));
  EXPECT_LT(tv.value, 0.02);
  EXPECT_LT(tv.value, 3 * expected);
  EXPECT_GT(tv.standard_error, 0.0);
}

TEST(OracleNll, KnownValues) {
  const auto nu = JointDist::dirichlet(Shape{3, 2}, 1.0, 8);
  std::size_t mode = 0;
  for (std::size_t i = 1; i < nu.size(); ++i) {
    if (nu.prob(i) > nu.prob(mode)) mode = i;
  }
  const std::vector<TokenSequence> modes(5, sequence_at(mode, nu.shape()));
  EXPECT_NEAR(oracle_nll(modes, nu).mean, -std::log(nu.prob(mode)), 1e-14);

  const auto uni = JointDist::uniform(Shape{4, 3});
  const std::vector<TokenSequence> any{{0, 1, 2}, {3, 3, 3}};
  EXPECT_NEAR(oracle_nll(any, uni).mean, 3 * std::log(4.0), 1e-14);
}

TEST(OracleNll, ApproachesEntropy) {
  const auto nu = JointDist::dirichlet(Shape{3, 2}, 0.5, 9);
  Rng rng(3);
  std::vector<TokenSequence> samples;
  for (int i = 0; i < 50000; ++i) samples.push_back(nu.sample(rng));
  const auto nll = oracle_nll(samples, nu);
  EXPECT_NEAR(nll.mean, nu.entropy(), 3 * nll.standard_error);
  EXPECT_EQ(nll.zero_probability, 0u);
}

TEST(OracleNll, ReportsZeroProbabilitySamples) {
  const auto copy = JointDist::copy(Shape{3, 2});
  const std::vector<TokenSequence> samples{{0, 0}, {0, 1}, {2, 2}, {1, 0}};
  const auto nll = oracle_nll(samples, copy);
  EXPECT_EQ(nll.zero_probability, 2u);
  EXPECT_EQ(nll.counted, 2u);
  EXPECT_NEAR(nll.mean, std::log(3.0), 1e-14);
}

TEST(FactorizationCheck, ProductAndCopy) {
  Rng rng(4);
  const auto prod = JointDist::product({{0.2, 0.8}, {0.5, 0.5}});
  const auto a = factorization_check(prod, 0.7, random_state(4, rng));
  EXPECT_NEAR(a.kl, 0.0, 1e-12);
  EXPECT_NEAR(a.mi, 0.0, 1e-12);
  EXPECT_NEAR(a.abs_diff, 0.0, 1e-12);

  const auto copy = JointDist::copy(Shape{3, 2});
  const auto b = factorization_check(copy, 50.0, random_state(6, rng));
  EXPECT_NEAR(b.kl, std::log(3.0), 1e-8);
  EXPECT_NEAR(b.mi, std::log(3.0), 1e-8);
}

TEST(FactorizationCheck, IdentityOnDirichlet) {
  Rng rng(5);
  const auto nu = JointDist::dirichlet(Shape{3, 3}, 0.5, 10);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    worst = std::max(worst, factorization_check(nu, 0.7, random_state(9, rng)).abs_diff);
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(MomentCheck, PointMassHasNoSurplus) {
  Rng rng(6);
  const MarginalTable m(Shape{3, 2}, {0, 1, 0, 1, 0, 0});
  const auto y = random_state(6, rng);
  const auto r = moment_check(m, y, 1.0, 0.5);
  EXPECT_LT(r.mean_residual, 1e-12);
  EXPECT_LT(r.cov_residual, 1e-12);
  const auto a = mcb_kernel_moments(m, y, 1.0, 0.5);
  const auto b = ddpm_kernel_moments(m, y, 1.0, 0.5);
  EXPECT_LT(testing::max_abs_diff(a.cov, b.cov), 1e-12);
}

TEST(MomentCheck, BernoulliSurplus) {
  Rng rng(7);
  const MarginalTable m = MarginalTable::uniform(Shape{2, 1});
  const auto y = random_state(2, rng);
  const double u_k = 1.2, u_next = 0.4;
  const auto a = mcb_kernel_moments(m, y, u_k, u_next);
  const auto b = ddpm_kernel_moments(m, y, u_k, u_next);
  const double beta = std::sinh(u_k - u_next) / std::sinh(u_k);
  const double expected[4] = {0.25, -0.25, -0.25, 0.25};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a.cov[i] - b.cov[i], beta * beta * expected[i], 1e-12);
}

// Independent oracle: covariance of a Gaussian mixture with a shared
// isotropic component covariance, accumulated over all V^L endpoints here.
TEST(MomentCheck, RandomTablesMatchMixtureOracle) {
  Rng rng(8);
  const Shape shape{3, 2};
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const MarginalTable m(shape, testing::random_rows(shape, rng));
    const auto y = random_state(6, rng);
    const auto r = moment_check(m, y, 1.0, 0.5);
    worst = std::max({worst, r.mean_residual, r.cov_residual});

    const auto law = factorized_posterior(m);
    const auto b = bridge_coeffs(0.5, 1.0);
    std::vector<double> mean(6, 0.0), second(36, 0.0);
    for (std::size_t i = 0; i < law.size(); ++i) {
      const auto e = encode(sequence_at(i, shape), 3);
      StateVector mu(6);
      for (int j = 0; j < 6; ++j) mu[j] = b.endpoint_weight * e[j] + b.state_weight * y[j];
      for (int j = 0; j < 6; ++j) {
        mean[j] += law.prob(i) * mu[j];
        for (int k = 0; k < 6; ++k) second[j * 6 + k] += law.prob(i) * mu[j] * mu[k];
      }
    }
    const auto got = mcb_kernel_moments(m, y, 1.0, 0.5);
    for (int j = 0; j < 6; ++j) {
      EXPECT_NEAR(got.mean[j], mean[j], 1e-12);
      for (int k = 0; k < 6; ++k) {
        const double cov = second[j * 6 + k] - mean[j] * mean[k] + (j == k ? b.variance : 0.0);
        EXPECT_NEAR(got.cov[j * 6 + k], cov, 1e-12);
      }
    }
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(DenoisingGap, ReportInvariants) {
  const auto copy = JointDist::copy(Shape{3, 2});
  const auto grid = NoiseGrid::uniform(6.0, 4);
  const auto report = denoising_gap(copy, grid, 2, 1000, 3);
  ASSERT_EQ(report.records.size(), 8u);
  ASSERT_EQ(report.intervals.size(), 4u);
  double total = 0.0, interval_sum = 0.0;
  for (const auto& r : report.records) {
    EXPECT_GE(r.ddpm_se, 0.0);
    EXPECT_GE(r.mcb_se, 0.0);
    EXPECT_GE(r.gap_se, 0.0);
    EXPECT_NEAR(r.weight, girsanov_weight(r.u), 1e-15);
    EXPECT_NEAR(r.u, 6.0 - r.t, 1e-15);
    EXPECT_NEAR(r.gap, r.ddpm_error - r.mcb_error, 1e-12);
    total += r.weight * r.quadrature_weight * r.gap;
  }
  for (const auto& it : report.intervals) interval_sum += it.gap;
  EXPECT_NEAR(report.total.gap, total, 1e-12);
  EXPECT_NEAR(report.total.gap, interval_sum, 1e-12);
  EXPECT_EQ(report.to_csv().substr(0, report.to_csv().find('\n')),
            "interval,node_t,u,weight,quad_weight,ddpm,ddpm_se,mcb,mcb_se,gap,gap_se");
  EXPECT_THROW(denoising_gap(copy, grid, 2, 999, 3), std::invalid_argument);
}

TEST(DenoisingGap, DeterministicAcrossThreadCounts) {
  const auto copy = JointDist::copy(Shape{3, 2});
  const auto grid = NoiseGrid::uniform(6.0, 2);
  const auto a = denoising_gap(copy, grid, 1, 1500, 4, 1);
  const auto b = denoising_gap(copy, grid, 1, 1500, 4, 3);
  EXPECT_EQ(a.to_csv(), b.to_csv());
}

TEST(DenoisingGap, NonnegativeAndStrictOnCopy) {
  const auto copy = JointDist::copy(Shape{3, 2});
  const auto report = denoising_gap(copy, NoiseGrid::uniform(6.0, 8), 3, 20000, 5);
  bool strict = false;
  for (const auto& it : report.intervals) {
    EXPECT_GE(it.gap, -3 * it.gap_se);
    strict = strict || it.gap > 3 * it.gap_se;
  }
  EXPECT_TRUE(strict);
}

TEST(DenoisingGap, PositionsDecoupleForProductLaws) {
  const std::vector<double> row{0.3, 0.7};
  const auto pair = JointDist::product({row, row});
  const auto single = JointDist::product({row});
  const auto grid = NoiseGrid::uniform(6.0, 8);
  const auto a = denoising_gap(pair, grid, 3, 20000, 6);
  const auto b = denoising_gap(single, grid, 3, 20000, 7);
  const double se = std::hypot(a.total.gap_se, 2 * b.total.gap_se);
  EXPECT_NEAR(a.total.gap, 2 * b.total.gap, 3 * se);
}

TEST(DenoisingGap, RefinedGridShrinksBothErrors) {
  const auto copy = JointDist::copy(Shape{3, 2});
  const auto coarse = denoising_gap(copy, NoiseGrid::uniform(6.0, 8), 3, 4000, 8);
  const auto fine = denoising_gap(copy, NoiseGrid::uniform(6.0, 512), 1, 1000, 9);
  EXPECT_LT(4 * fine.total.ddpm, coarse.total.ddpm);
  EXPECT_LT(4 * fine.total.mcb, coarse.total.mcb);
}

}  // namespace
}  // namespace mcb
