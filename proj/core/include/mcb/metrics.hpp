#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mcb/discrete_space.hpp"
#include "mcb/oracle.hpp"
#include "mcb/schedule.hpp"
#include "mcb/types.hpp"

namespace mcb {

/// Average over samples of the entropy (nats) of each sequence's own token
/// histogram.
double unigram_entropy(std::span<const TokenSequence> samples);

/// Per-sample values whose mean is unigram_entropy, for standard errors.
std::vector<double> unigram_entropies(std::span<const TokenSequence> samples);

struct TvEstimate {
  double value = 0.0;
  /// Delta-method standard error under multinomial sampling.
  double standard_error = 0.0;
};

/// 1/2 sum_w |freq(w) - nu(w)|
TvEstimate empirical_tv(std::span<const TokenSequence> samples, const JointDist& nu);

struct NllEstimate {
  double mean = 0.0;  ///< nats per sequence, over samples with nu(w) > 0
  double standard_error = 0.0;
  std::size_t counted = 0;
  std::size_t zero_probability = 0;  ///< samples with nu(w) = 0, reported not dropped silently
};

NllEstimate oracle_nll(std::span<const TokenSequence> samples, const JointDist& nu);

struct FactorizationCheck {
  double kl = 0.0;
  double mi = 0.0;
  double abs_diff = 0.0;
};

/// KL(joint posterior || product of its marginals) against the
/// multi-information at (t, x).
FactorizationCheck factorization_check(const JointDist& nu, double t, std::span<const double> x);

/// Mean vector and dense D x D covariance (row-major).
struct KernelMoments {
  StateVector mean;
  std::vector<double> cov;
};

/// Moments of K^MCB(. | y) as the Gaussian mixture over all V^L endpoints:
///   mean = sum_w q(w) mu_w,  cov = var I + sum_w q(w) mu_w mu_w^T - mean mean^T.
KernelMoments mcb_kernel_moments(const MarginalTable& m, std::span<const double> y, double u_k,
                                 double u_next);

/// Moments of the single Gaussian K^DDPM(. | y).
KernelMoments ddpm_kernel_moments(const MarginalTable& m, std::span<const double> y, double u_k,
                                  double u_next);

struct MomentResiduals {
  double mean_residual = 0.0;  ///< |mean_MCB - mean_DDPM|_2
  /// max-norm of Cov_MCB - Cov_DDPM - (sinh g / sinh u_k)^2 blockdiag(diag(pi) - pi pi^T)
  double cov_residual = 0.0;
};

MomentResiduals moment_check(const MarginalTable& m, std::span<const double> y, double u_k,
                             double u_next);

struct GapRecord {
  std::size_t interval = 0;
  double t = 0.0;                  ///< reverse time of the node
  double u = 0.0;                  ///< forward level T - t
  double weight = 0.0;             ///< c_u^2 / sigma_u^4
  double quadrature_weight = 0.0;  ///< dt share of the node
  double ddpm_error = 0.0, ddpm_se = 0.0;
  double mcb_error = 0.0, mcb_se = 0.0;
  double gap = 0.0, gap_se = 0.0;
};

/// Quadrature-weighted sums over the nodes of one interval (or all of them).
struct GapTotals {
  double ddpm = 0.0, ddpm_se = 0.0;
  double mcb = 0.0, mcb_se = 0.0;
  double gap = 0.0, gap_se = 0.0;
};

struct GapReport {
  std::vector<GapRecord> records;
  std::vector<GapTotals> intervals;  ///< one per grid interval
  GapTotals total;
  std::size_t samples_per_node = 0;
  std::vector<std::string> notes;

  /// interval,node_t,u,weight,quad_weight,ddpm,ddpm_se,mcb,mcb_se,gap,gap_se
  std::string to_csv() const;
};

/// Monte Carlo estimate of both Girsanov denoising-error integrals and their
/// difference, with common random numbers across the two terms. Nodes sit at
/// t_k + j/(nodes+1) * gamma_k, j = 1..nodes. Requires n_mc >= 1000.
GapReport denoising_gap(const JointDist& nu, const NoiseGrid& grid, std::size_t nodes_per_interval,
                        std::size_t n_mc, std::uint64_t seed, std::size_t threads = 0);

}  // namespace mcb
