#include "mcb/samplers.hpp"

#include <algorithm>
#include <cmath>

#include "mcb/discrete_space.hpp"
#include "mcb/parallel.hpp"

namespace mcb {
namespace {

void require_levels(double u_k, double u_next) {
  if (!std::isfinite(u_k) || !(u_next >= 0.0) || !(u_next < u_k)) {
    throw std::invalid_argument("reverse step requires 0 <= u_next < u_k");
  }
}

void require_dim(std::span<const double> y, Shape shape) {
  if (y.size() != shape.dim()) throw std::invalid_argument("state dimension does not match predictor");
}

StateVector bridge_sample(std::span<const double> y, std::span<const double> endpoint, double u_k,
                          double u_next, Rng& rng) {
  const BridgeCoeffs k = bridge_coeffs(u_next, u_k);
  StateVector next(y.size());
  if (k.variance == 0.0) {
    // sinh(0) = 0 pins the bridge to its endpoint exactly.
    std::copy(endpoint.begin(), endpoint.end(), next.begin());
    return next;
  }
  const double sd = std::sqrt(k.variance);
  for (std::size_t i = 0; i < y.size(); ++i) {
    next[i] = k.endpoint_weight * endpoint[i] + k.state_weight * y[i] + sd * rng.normal();
  }
  return next;
}

TokenSequence sample_endpoint(const MarginalTable& m, Rng& rng) {
  const Shape shape = m.shape();
  TokenSequence w(shape.length);
  for (std::size_t l = 0; l < shape.length; ++l) {
    w[l] = static_cast<Token>(sample_categorical(m.row(l), rng));
  }
  return w;
}

}  // namespace

Method parse_method(std::string_view name) {
  if (name == "mcb") return Method::mcb;
  if (name == "ddpm") return Method::ddpm;
  if (name == "ode") return Method::ode;
  if (name == "sde") return Method::sde;
  throw std::invalid_argument("unknown sampler method '" + std::string(name) + "'");
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::mcb: return "mcb";
    case Method::ddpm: return "ddpm";
    case Method::ode: return "ode";
    case Method::sde: return "sde";
  }
  return "unknown";
}

void SamplerConfig::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("SamplerConfig: temperature must be positive");
  if (!(top_p > 0.0) || top_p > 1.0) throw std::invalid_argument("SamplerConfig: top_p must lie in (0, 1]");
  if (chains == 0) throw std::invalid_argument("SamplerConfig: chains must be positive");
  if (method != Method::sde && !grid.ends_at_zero()) {
    throw std::invalid_argument("SamplerConfig: mcb/ddpm/ode grids must end at level 0");
  }
  if (method == Method::sde && (!(sde_min_level > 0.0) || !(sde_min_level < grid.horizon()))) {
    throw std::invalid_argument("SamplerConfig: sde_min_level must lie in (0, T)");
  }
}

StateVector mean_endpoint(const MarginalTable& marginals) {
  return StateVector(marginals.probs().begin(), marginals.probs().end());
}

McbStep mcb_step(std::span<const double> y, double u_k, double u_next,
                 const MarginalTable& marginals, double tau, double top_p, Rng& rng) {
  require_levels(u_k, u_next);
  require_dim(y, marginals.shape());
  const MarginalTable decoded = apply_decoding(marginals, tau, top_p);
  McbStep out;
  out.endpoint = sample_endpoint(decoded, rng);
  const StateVector x0 = encode(out.endpoint, marginals.shape().vocab);
  out.next = bridge_sample(y, x0, u_k, u_next, rng);
  return out;
}

McbStep mcb_step(std::span<const double> y, double u_k, double u_next,
                 const MarginalPredictor& pred, double tau, double top_p, Rng& rng) {
  require_levels(u_k, u_next);
  return mcb_step(y, u_k, u_next, pred.predict(y, u_k), tau, top_p, rng);
}

StateVector ddpm_step(std::span<const double> y, double u_k, double u_next,
                      const MarginalTable& marginals, Rng& rng) {
  require_levels(u_k, u_next);
  require_dim(y, marginals.shape());
  return bridge_sample(y, marginals.probs(), u_k, u_next, rng);
}

StateVector ddpm_step(std::span<const double> y, double u_k, double u_next,
                      const MarginalPredictor& pred, Rng& rng) {
  require_levels(u_k, u_next);
  return ddpm_step(y, u_k, u_next, pred.predict(y, u_k), rng);
}

StateVector ode_step(std::span<const double> y_fm, double t_k, double t_next,
                     const MarginalPredictor& pred, double horizon) {
  if (!(t_k >= 0.0) || !(t_k < 1.0)) throw std::invalid_argument("ode_step: requires 0 <= t_k < 1");
  if (!(t_next > t_k) || t_next > 1.0) throw std::invalid_argument("ode_step: requires t_k < t_next <= 1");
  require_dim(y_fm, pred.shape());
  const double u = t_k > 0.0 ? std::min(fm_time_inverse(t_k), horizon) : horizon;
  const double scale = fm_time_map(u).scale;
  StateVector query(y_fm.begin(), y_fm.end());
  for (double& v : query) v *= scale;
  const MarginalTable m = pred.predict(query, u);
  const auto delta = m.probs();
  const double keep = (1.0 - t_next) / (1.0 - t_k);
  const double move = (t_next - t_k) / (1.0 - t_k);
  StateVector out(y_fm.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * y_fm[i] + move * delta[i];
  return out;
}

StateVector sde_step(std::span<const double> y, double t, double t_next,
                     const MarginalPredictor& pred, double horizon, Rng& rng, double min_level) {
  if (!(t >= 0.0) || t_next < t) throw std::invalid_argument("sde_step: requires 0 <= t <= t_next");
  // Relative slack absorbs rounding in T - u_min.
  if (horizon - t_next < min_level * (1.0 - 1e-12)) {
    throw std::invalid_argument("sde_step: step would cross below the minimum noise level");
  }
  require_dim(y, pred.shape());
  StateVector out(y.begin(), y.end());
  const double h = t_next - t;
  if (h == 0.0) return out;
  const double u = horizon - t;
  const StateVector m = mean_endpoint(pred.predict(y, u));
  const StateVector score = tweedie_score(y, u, m);
  const double noise = std::sqrt(2.0 * h);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = y[i] + h * (y[i] + 2.0 * score[i]) + noise * rng.normal();
  }
  return out;
}

ChainResult run_chain(const SamplerConfig& cfg, const MarginalPredictor& pred, Rng& rng) {
  cfg.validate();
  const Shape shape = pred.shape();
  const NoiseGrid& grid = cfg.grid;
  const std::size_t steps = grid.steps();
  const double horizon = grid.horizon();

  StateVector y(shape.dim());
  rng.fill_normal(y);

  ChainResult result;
  if (cfg.trace) result.trace.emplace();
  auto record = [&](std::size_t k, double level, const StateVector& state,
                    std::optional<TokenSequence> endpoint, const MarginalTable& m) {
    if (!result.trace) return;
    result.trace->records.push_back({k, level, state, std::move(endpoint), mean_row_entropy(m)});
  };

  std::size_t k = 0;
  try {
    switch (cfg.method) {
      case Method::mcb:
        for (; k < steps; ++k) {
          const double u_k = grid.level(k), u_next = grid.level(k + 1);
          const MarginalTable m = pred.predict(y, u_k);
          McbStep s = mcb_step(y, u_k, u_next, m, cfg.temperature, cfg.top_p, rng);
          y = std::move(s.next);
          record(k, u_next, y, std::move(s.endpoint), m);
        }
        break;
      case Method::ddpm:
        for (; k < steps; ++k) {
          const double u_k = grid.level(k), u_next = grid.level(k + 1);
          const MarginalTable m = pred.predict(y, u_k);
          y = ddpm_step(y, u_k, u_next, m, rng);
          record(k, u_next, y, std::nullopt, m);
        }
        break;
      case Method::ode: {
        // Flow-matching times of the grid; level 0 is t = 1.
        auto fm_time = [&](double u) { return u > 0.0 ? fm_time_map(u).t_fm : 1.0; };
        StateVector y_fm = y;
        const double scale0 = fm_time_map(horizon).scale;
        for (double& v : y_fm) v /= scale0;
        for (; k < steps; ++k) {
          const double u_next = grid.level(k + 1);
          y_fm = ode_step(y_fm, fm_time(grid.level(k)), fm_time(u_next), pred, horizon);
          if (result.trace) {
            const double scale = u_next > 0.0 ? fm_time_map(u_next).scale : 1.0;
            StateVector ou = y_fm;
            for (double& v : ou) v *= scale;
            result.trace->records.push_back({k, u_next, std::move(ou), std::nullopt, 0.0});
          }
        }
        // scale(0) = 1: the terminal flow-matching state is the OU state.
        y = std::move(y_fm);
        break;
      }
      case Method::sde: {
        std::vector<double> levels(grid.levels().begin(), grid.levels().end());
        while (levels.size() > 1 && levels.back() < cfg.sde_min_level) levels.pop_back();
        if (levels.back() > cfg.sde_min_level) levels.push_back(cfg.sde_min_level);
        for (; k + 1 < levels.size(); ++k) {
          y = sde_step(y, horizon - levels[k], horizon - levels[k + 1], pred, horizon, rng,
                       cfg.sde_min_level);
          if (result.trace) result.trace->records.push_back({k, levels[k + 1], y, std::nullopt, 0.0});
        }
        if (cfg.sde_final_bridge) {
          const MarginalTable m = pred.predict(y, levels.back());
          McbStep s = mcb_step(y, levels.back(), 0.0, m, 1.0, 1.0, rng);
          y = std::move(s.next);
          record(k, 0.0, y, std::move(s.endpoint), m);
          ++k;
        }
        break;
      }
    }
  } catch (const StepError&) {
    throw;
  } catch (const std::exception& e) {
    throw StepError(k, e.what());
  }

  result.tokens = decode_argmax(y, shape);
  result.state = std::move(y);
  return result;
}

Rng chain_stream(std::uint64_t seed, std::size_t index) {
  return Rng::derived(seed, "chain", index);
}

std::vector<ChainResult> batch_run(const SamplerConfig& cfg, const MarginalPredictor& pred,
                                   std::size_t n, std::size_t threads) {
  if (n == 0) throw std::invalid_argument("batch_run: n must be positive");
  cfg.validate();
  std::vector<ChainResult> out(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        Rng rng = chain_stream(cfg.seed, i);
        out[i] = run_chain(cfg, pred, rng);
      },
      threads);
  return out;
}

std::vector<TokenSequence> batch_sample(const SamplerConfig& cfg, const MarginalPredictor& pred,
                                        std::size_t n, std::size_t threads) {
  auto runs = batch_run(cfg, pred, n, threads);
  std::vector<TokenSequence> out;
  out.reserve(n);
  for (auto& r : runs) out.push_back(std::move(r.tokens));
  return out;
}

}  // namespace mcb
