#pragma once

// Exact brute-force clean-posterior computations over an enumerable V^L.
// Everything here is exact-or-refuse: spaces above the enumeration cap are
// rejected by JointDist rather than approximated.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "mcb/discrete_space.hpp"
#include "mcb/types.hpp"

namespace mcb {

/// Raised when every endpoint has zero posterior weight.
class DegeneratePosteriorError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// L x V row-stochastic table of token posterior marginals q_{t,l}(v | x).
class MarginalTable {
 public:
  static constexpr double kRowTolerance = 1e-6;

  MarginalTable(Shape shape, std::vector<double> probs,
                double level = std::numeric_limits<double>::quiet_NaN());

  static MarginalTable uniform(Shape shape);

  Shape shape() const noexcept { return shape_; }
  /// Noise level the table was computed at (NaN when not applicable).
  double level() const noexcept { return level_; }
  std::span<const double> probs() const noexcept { return probs_; }
  std::span<const double> row(std::size_t position) const {
    return std::span<const double>(probs_).subspan(position * shape_.vocab, shape_.vocab);
  }
  double operator()(std::size_t position, Token v) const { return probs_[position * shape_.vocab + v]; }

  /// max_l |sum_v probs(l, v) - 1|
  double max_row_error() const;

 private:
  Shape shape_;
  std::vector<double> probs_;
  double level_;
};

double log_sum_exp(std::span<const double> log_weights);

/// exp(w_i - logsumexp(w)). Throws DegeneratePosteriorError when every
/// weight is -inf.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

/// q_t(w | x) proportional to nu(w) exp(-|x - c_t encode(w)|^2 / (2 sigma_t^2)).
JointDist joint_posterior(const JointDist& nu, double t, std::span<const double> x);

/// Row l, column v: total joint mass of sequences with w_l = v.
MarginalTable token_marginals(const JointDist& joint,
                              double level = std::numeric_limits<double>::quiet_NaN());

/// Product law prod_l m(l, w_l) materialized over V^L.
JointDist factorized_posterior(const MarginalTable& m);

/// sum_w p(w) log(p(w) / q(w)); +inf when p puts mass where q has none.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// sum_w joint(w) log(joint(w) / prod_l m(l, w_l)) in nats, with 0 log 0 = 0.
/// Returns +inf when joint charges a sequence the product law gives zero mass.
double multi_information(const JointDist& joint, const MarginalTable& m);

/// Coordinate-wise Bayes filter for one position l: the posterior mean of the
/// clean token given the prior marginal q_{u_k,l}(. | y_k) and a bridge
/// observation y_block of X_{u,l}, u in (0, u_k). Returns a point of the
/// simplex in R^V.
std::vector<double> filtered_endpoint_mean(std::span<const double> prior_row,
                                           std::span<const double> state_block, double u_k,
                                           double u, std::span<const double> observed_block);

/// Same, with the prior marginal computed exactly from nu at (u_k, y_k).
std::vector<double> filtered_endpoint_mean(const JointDist& nu, std::span<const double> y_k,
                                           double u_k, double u,
                                           std::span<const double> observed_block,
                                           std::size_t position);

/// log of sum_w law(w) N(z; bridge mean(y, encode(w)), bridge var I) for the
/// step u_k -> u_next. Gaussian constants are kept, so the density integrates
/// to one. When u_next = 0 the kernel is atomic: the result is log law(w) for
/// an exactly one-hot z = encode(w), and -inf for any other z.
double mixture_kernel_logdensity(const JointDist& endpoint_law, std::span<const double> y,
                                 double u_k, double u_next, std::span<const double> z);

/// Exact posterior-predictive kernel K*(z | y) from nu.
double true_kernel_logdensity(const JointDist& nu, std::span<const double> y, double u_k,
                              double u_next, std::span<const double> z);

/// Factorized kernel K^MCB(z | y) evaluated blockwise from the marginals.
double mcb_kernel_logdensity(const MarginalTable& m, std::span<const double> y, double u_k,
                             double u_next, std::span<const double> z);

struct KlEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
  /// Draws whose log-density ratio was not finite; excluded from the mean.
  std::size_t flagged = 0;
};

/// Monte Carlo KL(K*(. | y) || K^MCB(. | y)) with z drawn from K*.
/// Requires n >= 1000.
KlEstimate kernel_kl_estimate(const JointDist& nu, std::span<const double> y, double u_k,
                              double u_next, std::size_t n, std::uint64_t seed,
                              std::size_t threads = 0);

}  // namespace mcb
