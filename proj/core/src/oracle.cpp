#include "mcb/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mcb/parallel.hpp"
#include "mcb/random.hpp"
#include "mcb/schedule.hpp"
#include "mcb/stats.hpp"

namespace mcb {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_dim(std::span<const double> x, Shape shape, const char* what) {
  if (x.size() != shape.dim()) {
    throw std::invalid_argument(std::string(what) + ": expected dimension " +
                                std::to_string(shape.dim()) + ", got " + std::to_string(x.size()));
  }
}

void require_step(double u_k, double u_next, const char* what) {
  if (!(u_next >= 0.0) || !(u_next < u_k) || !std::isfinite(u_k)) {
    throw std::invalid_argument(std::string(what) + ": requires 0 <= u_next < u_k");
  }
}

// sum_v |r_v - a [v == token]|^2 for every token, for one block of residuals.
void block_sq_distances(std::span<const double> residual, double a, std::span<double> out) {
  double norm = 0.0;
  for (double r : residual) norm += r * r;
  for (std::size_t v = 0; v < residual.size(); ++v) out[v] = norm - 2.0 * a * residual[v] + a * a;
}

}  // namespace

MarginalTable::MarginalTable(Shape shape, std::vector<double> probs, double level)
    : shape_(shape), probs_(std::move(probs)), level_(level) {
  if (probs_.size() != shape_.dim()) throw std::invalid_argument("MarginalTable: wrong size");
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) {
      throw std::invalid_argument("MarginalTable: entries must be finite and nonnegative");
    }
  }
  if (max_row_error() > kRowTolerance) {
    throw std::invalid_argument("MarginalTable: rows must sum to 1");
  }
}

MarginalTable MarginalTable::uniform(Shape shape) {
  return MarginalTable(shape, std::vector<double>(shape.dim(), 1.0 / static_cast<double>(shape.vocab)));
}

double MarginalTable::max_row_error() const {
  double worst = 0.0;
  for (std::size_t l = 0; l < shape_.length; ++l) {
    double total = 0.0;
    for (double p : row(l)) total += p;
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return worst;
}

double log_sum_exp(std::span<const double> log_weights) {
  double peak = kNegInf;
  for (double w : log_weights) peak = std::max(peak, w);
  if (peak == kNegInf) return kNegInf;
  double total = 0.0;
  for (double w : log_weights) total += std::exp(w - peak);
  return peak + std::log(total);
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  const double lse = log_sum_exp(log_weights);
  if (!std::isfinite(lse)) {
    throw DegeneratePosteriorError("posterior has no finite-weight endpoint");
  }
  std::vector<double> out(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(log_weights[i] - lse);
    total += out[i];
  }
  // Second pass removes the O(n eps) drift left by exp/log.
  for (double& p : out) p /= total;
  return out;
}

JointDist joint_posterior(const JointDist& nu, double t, std::span<const double> x) {
  const Shape shape = nu.shape();
  require_dim(x, shape, "joint_posterior");
  if (!(t > 0.0)) throw std::invalid_argument("joint_posterior: requires t > 0");
  const OuCoeffs k = ou_coeffs(t);
  // -|x - c e(w)|^2 / (2 s2) = const + (c / s2) sum_l x[l, w_l]
  const double gain = k.c / k.sigma2;
  std::vector<double> log_w(nu.size(), kNegInf);
  TokenSequence seq(shape.length, 0);
  for (std::size_t i = 0; i < nu.size(); ++i) {
    if (i > 0) {
      // big-endian odometer
      for (std::size_t l = shape.length; l-- > 0;) {
        if (++seq[l] < shape.vocab) break;
        seq[l] = 0;
      }
    }
    const double prior = nu.prob(i);
    if (prior <= 0.0) continue;
    double dot = 0.0;
    for (std::size_t l = 0; l < shape.length; ++l) dot += x[l * shape.vocab + seq[l]];
    log_w[i] = std::log(prior) + gain * dot;
  }
  return JointDist(shape, normalize_log_weights(log_w), nu.size());
}

MarginalTable token_marginals(const JointDist& joint, double level) {
  return MarginalTable(joint.shape(), joint.position_marginals(), level);
}

JointDist factorized_posterior(const MarginalTable& m) {
  const Shape shape = m.shape();
  const std::size_t n = sequence_count(shape);
  std::vector<double> probs(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const TokenSequence seq = sequence_at(i, shape);
    double p = 1.0;
    for (std::size_t l = 0; l < shape.length; ++l) p *= m(l, seq[l]);
    probs[i] = p;
    total += p;
  }
  // Rows are only normalized to MarginalTable::kRowTolerance.
  for (double& p : probs) p /= total;
  return JointDist(shape, std::move(probs), n);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double multi_information(const JointDist& joint, const MarginalTable& m) {
  const Shape shape = joint.shape();
  if (!(m.shape() == shape)) throw std::invalid_argument("multi_information: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const double p = joint.prob(i);
    if (p <= 0.0) continue;
    const TokenSequence seq = sequence_at(i, shape);
    double log_product = 0.0;
    for (std::size_t l = 0; l < shape.length; ++l) {
      const double q = m(l, seq[l]);
      if (q <= 0.0) return std::numeric_limits<double>::infinity();
      log_product += std::log(q);
    }
    total += p * (std::log(p) - log_product);
  }
  // Exact zero can round to -1e-17.
  return std::max(total, 0.0);
}

std::vector<double> filtered_endpoint_mean(std::span<const double> prior_row,
                                           std::span<const double> state_block, double u_k,
                                           double u, std::span<const double> observed_block) {
  const std::size_t vocab = prior_row.size();
  if (state_block.size() != vocab || observed_block.size() != vocab) {
    throw std::invalid_argument("filtered_endpoint_mean: block size mismatch");
  }
  if (!(u > 0.0) || !(u < u_k)) {
    throw std::invalid_argument("filtered_endpoint_mean: requires 0 < u < u_k");
  }
  const BridgeCoeffs k = bridge_coeffs(u, u_k);
  // log N(obs; a e_v + b y, var I) = const + (a / var) (obs - b y)_v, and
  // a / var = 1 / (2 sinh u) stays finite as u -> u_k.
  const double gain = 1.0 / (2.0 * sinh_stable(u));
  std::vector<double> log_w(vocab, kNegInf);
  for (std::size_t v = 0; v < vocab; ++v) {
    if (prior_row[v] <= 0.0) continue;
    const double residual = observed_block[v] - k.state_weight * state_block[v];
    log_w[v] = std::log(prior_row[v]) + gain * residual;
  }
  return normalize_log_weights(log_w);
}

std::vector<double> filtered_endpoint_mean(const JointDist& nu, std::span<const double> y_k,
                                           double u_k, double u,
                                           std::span<const double> observed_block,
                                           std::size_t position) {
  const Shape shape = nu.shape();
  if (position >= shape.length) throw std::out_of_range("filtered_endpoint_mean: position");
  const MarginalTable prior = token_marginals(joint_posterior(nu, u_k, y_k), u_k);
  return filtered_endpoint_mean(prior.row(position), y_k.subspan(position * shape.vocab, shape.vocab),
                                u_k, u, observed_block);
}

double mixture_kernel_logdensity(const JointDist& endpoint_law, std::span<const double> y,
                                 double u_k, double u_next, std::span<const double> z) {
  const Shape shape = endpoint_law.shape();
  require_dim(y, shape, "mixture_kernel_logdensity");
  require_dim(z, shape, "mixture_kernel_logdensity");
  require_step(u_k, u_next, "mixture_kernel_logdensity");
  const BridgeCoeffs k = bridge_coeffs(u_next, u_k);
  if (k.variance == 0.0) {
    if (!is_one_hot(z, shape)) return kNegInf;
    const double p = endpoint_law.prob(decode_argmax(z, shape));
    return p > 0.0 ? std::log(p) : kNegInf;
  }
  const std::size_t vocab = shape.vocab;
  std::vector<double> residual(shape.dim());
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = z[i] - k.state_weight * y[i];
  std::vector<double> block_d(shape.dim());
  for (std::size_t l = 0; l < shape.length; ++l) {
    block_sq_distances(std::span<const double>(residual).subspan(l * vocab, vocab),
                       k.endpoint_weight, std::span<double>(block_d).subspan(l * vocab, vocab));
  }
  const double log_norm =
      -0.5 * static_cast<double>(shape.dim()) * std::log(2.0 * std::numbers::pi * k.variance);
  std::vector<double> terms(endpoint_law.size(), kNegInf);
  TokenSequence seq(shape.length, 0);
  for (std::size_t i = 0; i < endpoint_law.size(); ++i) {
    if (i > 0) {
      for (std::size_t l = shape.length; l-- > 0;) {
        if (++seq[l] < vocab) break;
        seq[l] = 0;
      }
    }
    const double p = endpoint_law.prob(i);
    if (p <= 0.0) continue;
    double sq = 0.0;
    for (std::size_t l = 0; l < shape.length; ++l) sq += block_d[l * vocab + seq[l]];
    terms[i] = std::log(p) + log_norm - sq / (2.0 * k.variance);
  }
  return log_sum_exp(terms);
}

double true_kernel_logdensity(const JointDist& nu, std::span<const double> y, double u_k,
                              double u_next, std::span<const double> z) {
  return mixture_kernel_logdensity(joint_posterior(nu, u_k, y), y, u_k, u_next, z);
}

double mcb_kernel_logdensity(const MarginalTable& m, std::span<const double> y, double u_k,
                             double u_next, std::span<const double> z) {
  const Shape shape = m.shape();
  require_dim(y, shape, "mcb_kernel_logdensity");
  require_dim(z, shape, "mcb_kernel_logdensity");
  require_step(u_k, u_next, "mcb_kernel_logdensity");
  const BridgeCoeffs k = bridge_coeffs(u_next, u_k);
  const std::size_t vocab = shape.vocab;
  if (k.variance == 0.0) {
    if (!is_one_hot(z, shape)) return kNegInf;
    const TokenSequence seq = decode_argmax(z, shape);
    double total = 0.0;
    for (std::size_t l = 0; l < shape.length; ++l) {
      const double p = m(l, seq[l]);
      if (p <= 0.0) return kNegInf;
      total += std::log(p);
    }
    return total;
  }
  const double block_log_norm =
      -0.5 * static_cast<double>(vocab) * std::log(2.0 * std::numbers::pi * k.variance);
  std::vector<double> residual(vocab), dist(vocab), terms(vocab);
  double total = 0.0;
  for (std::size_t l = 0; l < shape.length; ++l) {
    for (std::size_t v = 0; v < vocab; ++v) {
      residual[v] = z[l * vocab + v] - k.state_weight * y[l * vocab + v];
    }
    block_sq_distances(residual, k.endpoint_weight, dist);
    const auto row = m.row(l);
    for (std::size_t v = 0; v < vocab; ++v) {
      terms[v] = row[v] > 0.0 ? std::log(row[v]) + block_log_norm - dist[v] / (2.0 * k.variance)
                              : kNegInf;
    }
    total += log_sum_exp(terms);
  }
  return total;
}

KlEstimate kernel_kl_estimate(const JointDist& nu, std::span<const double> y, double u_k,
                              double u_next, std::size_t n, std::uint64_t seed,
                              std::size_t threads) {
  if (n < 1000) throw std::invalid_argument("kernel_kl_estimate: requires n >= 1000");
  require_step(u_k, u_next, "kernel_kl_estimate");
  const Shape shape = nu.shape();
  const JointDist posterior = joint_posterior(nu, u_k, y);
  const MarginalTable marginals = token_marginals(posterior, u_k);
  const BridgeCoeffs k = bridge_coeffs(u_next, u_k);
  const double sd = std::sqrt(k.variance);

  constexpr std::size_t kBlock = 1024;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<RunningStats> stats(blocks);
  std::vector<std::size_t> flagged(blocks, 0);
  parallel_for(
      blocks,
      [&](std::size_t b) {
        Rng rng = Rng::derived(seed, "kernel-kl", b);
        const std::size_t count = std::min(kBlock, n - b * kBlock);
        StateVector z(shape.dim());
        for (std::size_t s = 0; s < count; ++s) {
          const TokenSequence w = posterior.sample(rng);
          const StateVector x0 = encode(w, shape.vocab);
          for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = k.endpoint_weight * x0[i] + k.state_weight * y[i] + sd * rng.normal();
          }
          const double diff = mixture_kernel_logdensity(posterior, y, u_k, u_next, z) -
                              mcb_kernel_logdensity(marginals, y, u_k, u_next, z);
          if (std::isfinite(diff)) {
            stats[b].push(diff);
          } else {
            ++flagged[b];
          }
        }
      },
      threads);

  RunningStats total;
  KlEstimate out;
  for (std::size_t b = 0; b < blocks; ++b) {
    total.merge(stats[b]);
    out.flagged += flagged[b];
  }
  out.estimate = total.mean();
  out.standard_error = total.standard_error();
  out.samples = total.count();
  return out;
}

}  // namespace mcb
