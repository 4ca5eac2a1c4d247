#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mcb/discrete_space.hpp"
#include "mcb/oracle.hpp"
#include "mcb/schedule.hpp"
#include "mcb/types.hpp"

namespace mcb {

/// Maps a noisy state x at forward level u to token posterior marginals.
/// Implementations must be safe to call concurrently once constructed.
class MarginalPredictor {
 public:
  virtual ~MarginalPredictor() = default;

  virtual Shape shape() const = 0;
  virtual MarginalTable predict(std::span<const double> x, double u) const = 0;
};

/// Exact marginals token_marginals(joint_posterior(nu, u, x)).
class OraclePredictor final : public MarginalPredictor {
 public:
  explicit OraclePredictor(JointDist nu) : nu_(std::move(nu)) {}

  Shape shape() const override { return nu_.shape(); }
  MarginalTable predict(std::span<const double> x, double u) const override;
  const JointDist& distribution() const noexcept { return nu_; }

 private:
  JointDist nu_;
};

enum class LossWeighting {
  constant,  ///< alpha_u = 1
  snr,       ///< alpha_u = min(c_u^2 / sigma_u^2, 100)
};

LossWeighting parse_loss_weighting(std::string_view name);
std::string_view to_string(LossWeighting weighting);

struct TrainConfig {
  std::size_t steps = 20000;
  std::size_t batch = 64;
  double learning_rate = 0.05;
  std::size_t hidden = 64;
  double u_min = 0.01;
  double horizon = kDefaultHorizon;
  LossWeighting weighting = LossWeighting::constant;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Raised when a training step produces a non-finite loss.
class TrainingDivergedError : public std::runtime_error {
 public:
  TrainingDivergedError(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// One tanh hidden layer over [c_u x, c_u, sigma_u] with per-position softmax
/// heads. Parameters live in a single flat buffer laid out as
/// W1 (H x (D+2), row-major), b1 (H), W2 (D x H, row-major), b2 (D).
class MlpPredictor final : public MarginalPredictor {
 public:
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization from seed.
  MlpPredictor(Shape shape, std::size_t hidden, std::uint64_t seed);

  Shape shape() const override { return shape_; }
  MarginalTable predict(std::span<const double> x, double u) const override;

  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t input_width() const noexcept { return shape_.dim() + 2; }
  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  /// Cross-entropy -sum_l weight * log p_l(w_l | x) and its gradient,
  /// accumulated into grad (same layout as parameters()).
  double accumulate_gradient(std::span<const double> x, double u, const TokenSequence& target,
                             double weight, std::span<double> grad) const;

  /// Training settings recorded alongside the weights.
  const TrainConfig& config() const noexcept { return config_; }
  void set_config(const TrainConfig& cfg) { config_ = cfg; }

  /// {"widths": [D+2, H, D], "weights": [[W1], [b1], [W2], [b2]], "config": {...}}
  std::string to_json() const;
  static MlpPredictor from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static MlpPredictor load(const std::filesystem::path& path);

 private:
  struct Offsets {
    std::size_t w1, b1, w2, b2, total;
  };
  Offsets offsets() const;
  void forward(std::span<const double> x, double u, std::vector<double>& input,
               std::vector<double>& hidden, std::vector<double>& probs) const;

  Shape shape_;
  std::size_t hidden_;
  std::vector<double> params_;
  TrainConfig config_;
};

struct TrainResult {
  MlpPredictor predictor;
  /// Mean batch loss at every step.
  std::vector<double> loss_curve;
};

/// Plain SGD on the denoising cross-entropy with w ~ nu, u ~ U[u_min, T],
/// x = c_u encode(w) + sigma_u z.
TrainResult train_predictor(const JointDist& nu, const TrainConfig& cfg);

/// Same objective with w drawn uniformly from a fixed corpus.
TrainResult train_predictor(std::span<const TokenSequence> corpus, Shape shape,
                            const TrainConfig& cfg);

/// pi^{1/tau} renormalized per row; tau must be positive.
MarginalTable apply_temperature(const MarginalTable& m, double tau);

/// Per row: keep the smallest prefix (sorted by mass, ties to lower index)
/// whose cumulative mass reaches p, zero the rest, renormalize.
MarginalTable apply_nucleus(const MarginalTable& m, double p);

/// Temperature first, then nucleus. Identity when tau = 1 and p = 1.
MarginalTable apply_decoding(const MarginalTable& m, double tau, double p);

/// Mean per-row Shannon entropy in nats.
double mean_row_entropy(const MarginalTable& m);

}  // namespace mcb
