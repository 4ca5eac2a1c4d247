#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

#include "mcb/discrete_space.hpp"
#include "mcb/marginal_model.hpp"
#include "mcb/metrics.hpp"
#include "mcb/oracle.hpp"
#include "mcb/samplers.hpp"
#include "mcb/schedule.hpp"
#include "mcb/stats.hpp"
#include "support.hpp"

namespace mcb {
namespace {

using testing::max_abs_diff;
using testing::random_state;

class FixedPredictor final : public MarginalPredictor {
 public:
  explicit FixedPredictor(MarginalTable m) : m_(std::move(m)) {}
  Shape shape() const override { return m_.shape(); }
  MarginalTable predict(std::span<const double>, double) const override { return m_; }

 private:
  MarginalTable m_;
};

// Fails on its n-th query.
class FailingPredictor final : public MarginalPredictor {
 public:
  FailingPredictor(Shape shape, int fail_at) : shape_(shape), fail_at_(fail_at) {}
  Shape shape() const override { return shape_; }
  MarginalTable predict(std::span<const double>, double) const override {
    if (calls_++ == fail_at_) throw std::runtime_error("predictor failure");
    return MarginalTable::uniform(shape_);
  }

 private:
  Shape shape_;
  int fail_at_;
  mutable std::atomic<int> calls_{0};
};

TEST(McbStep, TerminalStepIsExactlyOneHot) {
  Rng rng(1);
  const MarginalTable m(Shape{3, 2}, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3});
  for (int i = 0; i < 50; ++i) {
    const auto s = mcb_step(random_state(6, rng), 0.5, 0.0, m, 1.0, 1.0, rng);
    EXPECT_EQ(s.next, encode(s.endpoint, 3));
  }
}

TEST(McbStep, PointMassMarginalsFixTheEndpoint) {
  Rng rng(2);
  const MarginalTable m(Shape{3, 2}, {0, 0, 1, 0, 1, 0});
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(mcb_step(random_state(6, rng), 2.0, 1.0, m, 1.0, 1.0, rng).endpoint, (TokenSequence{2, 1}));
  }
}

TEST(McbStep, EmpiricalMeanMatchesClosedForm) {
  Rng rng(3);
  const auto copy = JointDist::copy(Shape{3, 2});
  const OraclePredictor oracle(copy);
  const double u_k = 1.0, u_next = 0.5;
  const auto y = forward_sample(encode({1, 1}, 3), u_k, rng);
  const auto m = oracle.predict(y, u_k);
  const auto b = bridge_coeffs(u_next, u_k);
  std::vector<RunningStats> coord(6);
  for (int i = 0; i < 100000; ++i) {
    const auto s = mcb_step(y, u_k, u_next, m, 1.0, 1.0, rng);
    for (int j = 0; j < 6; ++j) coord[j].push(s.next[j]);
  }
  for (int j = 0; j < 6; ++j) {
    const double expected = b.endpoint_weight * m.probs()[j] + b.state_weight * y[j];
    EXPECT_NEAR(coord[j].mean(), expected, 4 * coord[j].standard_error()) << j;
  }
}

TEST(McbStep, DecodingControlsReachTheEndpoint) {
  Rng rng(4);
  const MarginalTable m(Shape{3, 1}, {0.6, 0.3, 0.1});
  for (int i = 0; i < 200; ++i) {
    const auto s = mcb_step(random_state(3, rng), 1.0, 0.0, m, 1.0, 0.5, rng);
    EXPECT_EQ(s.endpoint, TokenSequence{0});
  }
}

TEST(DdpmStep, TerminalStepLandsOnTheMean) {
  Rng rng(5);
  const MarginalTable m(Shape{3, 2}, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3});
  const auto next = ddpm_step(random_state(6, rng), 0.7, 0.0, m, rng);
  EXPECT_EQ(next, mean_endpoint(m));
}

TEST(DdpmStep, AnalyticMeanEqualsMcb) {
  Rng rng(6);
  const MarginalTable m(Shape{3, 2}, testing::random_rows(Shape{3, 2}, rng));
  const auto y = random_state(6, rng);
  const auto a = mcb_kernel_moments(m, y, 1.0, 0.5);
  const auto b = ddpm_kernel_moments(m, y, 1.0, 0.5);
  EXPECT_LT(max_abs_diff(a.mean, b.mean), 1e-12);
}

// Empirical covariances of both kernels against their closed forms; the MCB
// surplus is (sinh g / sinh u_k)^2 blockdiag(diag(pi) - pi pi^T).
TEST(DdpmStep, CovarianceSurplusMatchesCategoricalCovariance) {
  Rng rng(7);
  const Shape shape{3, 2};
  const MarginalTable m(shape, {0.2, 0.5, 0.3, 0.6, 0.1, 0.3});
  const auto y = random_state(6, rng);
  const double u_k = 1.0, u_next = 0.5;
  const auto b = bridge_coeffs(u_next, u_k);
  const double a2 = b.endpoint_weight * b.endpoint_weight;
  StateVector mean(6);
  for (int j = 0; j < 6; ++j) mean[j] = b.endpoint_weight * m.probs()[j] + b.state_weight * y[j];

  std::vector<RunningStats> cov_mcb(36), cov_ddpm(36);
  for (int i = 0; i < 100000; ++i) {
    const auto zm = mcb_step(y, u_k, u_next, m, 1.0, 1.0, rng).next;
    const auto zd = ddpm_step(y, u_k, u_next, m, rng);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) {
        cov_mcb[r * 6 + c].push((zm[r] - mean[r]) * (zm[c] - mean[c]));
        cov_ddpm[r * 6 + c].push((zd[r] - mean[r]) * (zd[c] - mean[c]));
      }
    }
  }
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 6; ++c) {
      const double base = r == c ? b.variance : 0.0;
      double surplus = 0.0;
      if (r / 3 == c / 3) {
        const double pr = m.probs()[r], pc = m.probs()[c];
        surplus = a2 * ((r == c ? pr : 0.0) - pr * pc);
      }
      const auto& dm = cov_mcb[r * 6 + c];
      const auto& dd = cov_ddpm[r * 6 + c];
      EXPECT_NEAR(dd.mean(), base, 4 * dd.standard_error()) << r << "," << c;
      EXPECT_NEAR(dm.mean(), base + surplus, 4 * dm.standard_error()) << r << "," << c;
    }
  }
}

TEST(OdeStep, FixedPointAndTerminalCollapse) {
  const MarginalTable m(Shape{3, 1}, {0.2, 0.5, 0.3});
  const FixedPredictor fixed(m);
  const StateVector delta(m.probs().begin(), m.probs().end());
  EXPECT_LT(max_abs_diff(ode_step(delta, 0.3, 0.6, fixed), delta), 1e-15);
  const StateVector y{2.0, -1.0, 0.5};
  EXPECT_LT(max_abs_diff(ode_step(y, 0.4, 1.0, fixed), delta), 1e-15);
}

TEST(OdeStep, SingleStepFromPureNoiseIsTheUniformPoint) {
  Rng rng(8);
  const OraclePredictor oracle(JointDist::uniform(Shape{3, 2}));
  // At T = 6 the posterior still sees c_T = e^{-6} of signal; query deeper.
  const auto out = ode_step(random_state(6, rng), 0.0, 1.0, oracle, 20.0);
  for (double v : out) EXPECT_NEAR(v, 1.0 / 3, 1e-6);
  const auto shallow = ode_step(random_state(6, rng), 0.0, 1.0, oracle);
  for (double v : shallow) EXPECT_NEAR(v, 1.0 / 3, 1e-2);
  EXPECT_THROW(ode_step(out, 0.5, 0.5, oracle), std::invalid_argument);
}

TEST(SdeStep, ZeroStepIsIdentity) {
  Rng rng(9);
  const OraclePredictor oracle(JointDist::uniform(Shape{2, 2}));
  const auto y = random_state(4, rng);
  EXPECT_EQ(sde_step(y, 1.0, 1.0, oracle, 6.0, rng), y);
}

TEST(SdeStep, PureNoiseIncrementVariance) {
  Rng rng(10);
  const OraclePredictor oracle(JointDist::uniform(Shape{2, 1}));
  const StateVector zero(2, 0.0);
  const double h = 0.05;
  RunningStats var;
  for (int i = 0; i < 100000; ++i) {
    const auto y = sde_step(zero, 0.0, h, oracle, 50.0, rng);
    var.push(y[0] * y[0]);
  }
  EXPECT_NEAR(var.mean(), 2 * h, 4 * var.standard_error());
}

TEST(SdeStep, StationaryScoreContracts) {
  Rng rng(11);
  const OraclePredictor oracle(JointDist::uniform(Shape{2, 1}));
  const StateVector y{1.5, -0.8};
  RunningStats a, b;
  for (int i = 0; i < 20000; ++i) {
    const auto next = sde_step(y, 0.0, 0.01, oracle, 50.0, rng);
    a.push(next[0]);
    b.push(next[1]);
  }
  EXPECT_LT(a.mean(), y[0]);
  EXPECT_GT(b.mean(), y[1]);
  EXPECT_NEAR(a.mean(), y[0] * (1 - 0.01), 4 * a.standard_error());
}

TEST(SdeStep, RefusesToCrossMinimumLevel) {
  Rng rng(12);
  const OraclePredictor oracle(JointDist::uniform(Shape{2, 1}));
  EXPECT_THROW(sde_step(StateVector(2, 0.0), 5.0, 5.999, oracle, 6.0, rng, 0.01), std::invalid_argument);
}

TEST(RunChain, SingleMcbStepDrawsFromInitialMarginals) {
  const auto nu = JointDist::dirichlet(Shape{3, 2}, 0.5, 31);
  const OraclePredictor oracle(nu);
  SamplerConfig cfg;
  cfg.grid = NoiseGrid::uniform(6.0, 1);
  cfg.seed = 3;
  const std::size_t n = 20000;
  const auto samples = batch_sample(cfg, oracle, n);

  Rng rng(13);
  std::vector<double> expected(6, 0.0);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const auto m = oracle.predict(random_state(6, rng), 6.0);
    for (int j = 0; j < 6; ++j) expected[j] += m.probs()[j] / draws;
  }
  for (std::size_t l = 0; l < 2; ++l) {
    for (Token v = 0; v < 3; ++v) {
      double freq = 0.0;
      for (const auto& s : samples) freq += s[l] == v;
      freq /= static_cast<double>(n);
      const double p = expected[l * 3 + v];
      EXPECT_NEAR(freq, p, 4 * std::sqrt(p * (1 - p) / n) + 1e-9) << l << "," << v;
    }
  }
}

TEST(RunChain, DeterministicReplayAndStreamSplitting) {
  const OraclePredictor oracle(JointDist::copy(Shape{3, 2}));
  for (Method method : {Method::mcb, Method::ddpm, Method::ode, Method::sde}) {
    SamplerConfig cfg;
    cfg.grid = NoiseGrid::uniform(6.0, 8);
    cfg.method = method;
    cfg.seed = 99;
    const auto a = batch_run(cfg, oracle, 20);
    const auto b = batch_run(cfg, oracle, 20, 1);
    const auto more = batch_run(cfg, oracle, 35, 4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].state, b[i].state);
      EXPECT_EQ(a[i].state, more[i].state);
    }
    Rng rng = chain_stream(cfg.seed, 0);
    EXPECT_EQ(run_chain(cfg, oracle, rng).state, batch_run(cfg, oracle, 1)[0].state);
  }
}

TEST(RunChain, TerminalValidityPerMethod) {
  const auto nu = JointDist::dirichlet(Shape{3, 2}, 0.5, 4);
  const OraclePredictor oracle(nu);
  SamplerConfig cfg;
  cfg.grid = NoiseGrid::uniform(6.0, 16);
  for (Method method : {Method::mcb, Method::ddpm, Method::ode}) {
    cfg.method = method;
    for (const auto& r : batch_run(cfg, oracle, 200)) {
      if (method == Method::mcb) {
        EXPECT_TRUE(is_one_hot(r.state, nu.shape()));
      }
      for (std::size_t l = 0; l < 2; ++l) {
        double total = 0.0;
        for (std::size_t v = 0; v < 3; ++v) {
          EXPECT_GE(r.state[l * 3 + v], -1e-12);
          total += r.state[l * 3 + v];
        }
        EXPECT_NEAR(total, 1.0, 1e-6);
      }
    }
  }
}

TEST(RunChain, SdeFinalBridgeEndsOneHot) {
  const OraclePredictor oracle(JointDist::copy(Shape{3, 2}));
  SamplerConfig cfg;
  cfg.grid = NoiseGrid::uniform(6.0, 32);
  cfg.method = Method::sde;
  cfg.sde_final_bridge = true;
  for (const auto& r : batch_run(cfg, oracle, 50)) EXPECT_TRUE(is_one_hot(r.state, Shape{3, 2}));
}

TEST(RunChain, OdeRecoversUniform) {
  const auto nu = JointDist::uniform(Shape{3, 2});
  const OraclePredictor oracle(nu);
  SamplerConfig cfg;
  cfg.grid = NoiseGrid::uniform(6.0, 128);
  cfg.method = Method::ode;
  cfg.seed = 5;
  const auto samples = batch_sample(cfg, oracle, 50000);
  EXPECT_LT(empirical_tv(samples, nu).value, 0.05);
}

TEST(RunChain, McbTvShrinksWithStepCount) {
  const auto copy = JointDist::copy(Shape{3, 2});
  const OraclePredictor oracle(copy);
  std::vector<TvEstimate> tv;
  for (std::size_t k : {4, 16, 64, 256}) {
    SamplerConfig cfg;
    cfg.grid = NoiseGrid::uniform(6.0, k);
    cfg.seed = 21;
    tv.push_back(empirical_tv(batch_sample(cfg, oracle, 20000), copy));
  }
  for (std::size_t i = 1; i < tv.size(); ++i) {
    EXPECT_LE(tv[i].value, tv[i - 1].value + 2 * std::hypot(tv[i].standard_error, tv[i - 1].standard_error)) << i;
  }
  EXPECT_LT(tv.back().value, 0.02);
}

// Exact joint endpoints through the same bridge recover the law at any step
// count, so MCB's coarse-grid error is the factorization and not the bridge.
TEST(RunChain, JointEndpointBridgeRecoversCopyAtFewSteps) {
  const auto copy = JointDist::copy(Shape{3, 2});
  const auto grid = NoiseGrid::uniform(6.0, 4);
  std::vector<TokenSequence> samples;
  for (std::size_t i = 0; i < 20000; ++i) {
    Rng rng = chain_stream(22, i);
    StateVector y(6);
    rng.fill_normal(y);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
      const auto w = joint_posterior(copy, grid.level(k), y).sample(rng);
      const auto b = bridge_params(grid.level(k + 1), grid.level(k), y, encode(w, 3));
      for (std::size_t j = 0; j < 6; ++j) y[j] = b.mean[j] + std::sqrt(b.var) * rng.normal();
    }
    samples.push_back(decode_argmax(y, Shape{3, 2}));
  }
  EXPECT_LT(empirical_tv(samples, copy).value, 0.02);
}

TEST(RunChain, TraceRecordsEveryStep) {
  const OraclePredictor oracle(JointDist::copy(Shape{3, 2}));
  SamplerConfig cfg;
  cfg.grid = NoiseGrid::uniform(6.0, 5);
  cfg.trace = true;
  Rng rng(14);
  const auto r = run_chain(cfg, oracle, rng);
  ASSERT_TRUE(r.trace.has_value());
  ASSERT_EQ(r.trace->records.size(), 5u);
  EXPECT_EQ(r.trace->records.back().level, 0.0);
  EXPECT_EQ(r.trace->records.back().state, r.state);
  EXPECT_TRUE(r.trace->records.front().endpoint.has_value());
}

TEST(RunChain, FailuresCarryTheStepIndex) {
  const FailingPredictor failing(Shape{2, 2}, 3);
  SamplerConfig cfg;
  cfg.grid = NoiseGrid::uniform(6.0, 8);
  Rng rng(15);
  try {
    run_chain(cfg, failing, rng);
    FAIL() << "expected StepError";
  } catch (const StepError& e) {
    EXPECT_EQ(e.step(), 3u);
  }
}

TEST(SamplerConfig, Validation) {
  SamplerConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.temperature = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.temperature = 1.0;
  cfg.top_p = 1.2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.top_p = 1.0;
  cfg.grid = NoiseGrid({6.0, 1.0});
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.method = Method::sde;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(parse_method("ode"), Method::ode);
  EXPECT_THROW(parse_method("euler"), std::invalid_argument);
}

}  // namespace
}  // namespace mcb
