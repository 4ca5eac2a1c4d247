#pragma once

// Reverse samplers over a shared NoiseGrid and MarginalPredictor:
//   mcb  - sample a one-hot endpoint from the (decoded) factorized marginals,
//          then the exact OU bridge to it
//   ddpm - exact OU bridge to the frozen conditional-mean endpoint
//   ode  - Euler probability-flow ODE in the flow-matching convention
//   sde  - Euler-Maruyama on the reverse SDE with the Tweedie score

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mcb/marginal_model.hpp"
#include "mcb/random.hpp"
#include "mcb/schedule.hpp"
#include "mcb/types.hpp"

namespace mcb {

enum class Method { mcb, ddpm, ode, sde };

Method parse_method(std::string_view name);
std::string_view to_string(Method method);

/// Default lowest level the SDE baseline integrates down to.
inline constexpr double kDefaultSdeMinLevel = 0.01;

struct SamplerConfig {
  NoiseGrid grid = NoiseGrid::uniform(kDefaultHorizon, 64);
  Method method = Method::mcb;
  /// Endpoint decoding controls; only the mcb method uses them.
  double temperature = 1.0;
  double top_p = 1.0;
  std::uint64_t seed = 0;
  std::size_t chains = 1;
  double sde_min_level = kDefaultSdeMinLevel;
  /// After the SDE stops at sde_min_level, sample an endpoint from the
  /// marginals there and jump to it (the exact bridge to level 0).
  bool sde_final_bridge = false;
  bool trace = false;

  void validate() const;
};

/// Error raised inside run_chain, tagged with the failing step.
class StepError : public std::runtime_error {
 public:
  StepError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct StepRecord {
  std::size_t step = 0;
  double level = 0.0;       ///< forward noise level after the step
  StateVector state;        ///< OU-convention state after the step
  std::optional<TokenSequence> endpoint;  ///< mcb only
  double marginal_entropy = 0.0;          ///< mean row entropy of the queried marginals
};

struct ChainTrace {
  std::vector<StepRecord> records;
};

struct McbStep {
  StateVector next;
  TokenSequence endpoint;
};

/// One marginal-conditioned bridge step u_k -> u_next (0 <= u_next < u_k).
McbStep mcb_step(std::span<const double> y, double u_k, double u_next,
                 const MarginalPredictor& pred, double tau, double top_p, Rng& rng);

/// Same step given already-evaluated marginals at (y, u_k).
McbStep mcb_step(std::span<const double> y, double u_k, double u_next,
                 const MarginalTable& marginals, double tau, double top_p, Rng& rng);

/// One frozen conditional-mean bridge step.
StateVector ddpm_step(std::span<const double> y, double u_k, double u_next,
                      const MarginalPredictor& pred, Rng& rng);
StateVector ddpm_step(std::span<const double> y, double u_k, double u_next,
                      const MarginalTable& marginals, Rng& rng);

/// Euler step of the probability-flow ODE from flow-matching time t_k to
/// t_next (0 <= t_k < t_next <= 1). The denoiser is queried at the OU level
/// of t_k, clamped to at most `horizon`, with the state rescaled to OU units.
StateVector ode_step(std::span<const double> y_fm, double t_k, double t_next,
                     const MarginalPredictor& pred, double horizon = kDefaultHorizon);

/// Euler-Maruyama step of the reverse SDE from reverse time t to t_next:
///   y + h (y + 2 score) + sqrt(2h) xi, score from the Tweedie formula at
/// level T - t. Rejects steps ending below min_level.
StateVector sde_step(std::span<const double> y, double t, double t_next,
                     const MarginalPredictor& pred, double horizon, Rng& rng,
                     double min_level = kDefaultSdeMinLevel);

/// Blockwise mean endpoint sum_v pi_l(v) e_v, i.e. the flattened table.
StateVector mean_endpoint(const MarginalTable& marginals);

struct ChainResult {
  StateVector state;     ///< final state in OU convention
  TokenSequence tokens;  ///< decode_argmax(state)
  std::optional<ChainTrace> trace;
};

/// Initializes y ~ N(0, I_D) and walks the configured grid.
ChainResult run_chain(const SamplerConfig& cfg, const MarginalPredictor& pred, Rng& rng);

/// Stream of chain `index`: derive_seed(seed, "chain", index).
Rng chain_stream(std::uint64_t seed, std::size_t index);

/// n independent chains in chain-index order, each on its own derived stream.
std::vector<ChainResult> batch_run(const SamplerConfig& cfg, const MarginalPredictor& pred,
                                   std::size_t n, std::size_t threads = 0);

std::vector<TokenSequence> batch_sample(const SamplerConfig& cfg, const MarginalPredictor& pred,
                                        std::size_t n, std::size_t threads = 0);

}  // namespace mcb
