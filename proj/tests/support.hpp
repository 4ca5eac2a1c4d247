#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "mcb/discrete_space.hpp"
#include "mcb/oracle.hpp"
#include "mcb/random.hpp"
#include "mcb/schedule.hpp"
#include "mcb/types.hpp"

namespace mcb::testing {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline StateVector random_state(std::size_t dim, Rng& rng) {
  StateVector x(dim);
  rng.fill_normal(x);
  return x;
}

// Dirichlet(1) rows, row-major L x V.
inline std::vector<double> random_rows(Shape shape, Rng& rng) {
  std::vector<double> p(shape.dim());
  for (std::size_t l = 0; l < shape.length; ++l) {
    double s = 0.0;
    for (std::size_t v = 0; v < shape.vocab; ++v) s += p[l * shape.vocab + v] = -std::log1p(-rng.uniform());
    for (std::size_t v = 0; v < shape.vocab; ++v) p[l * shape.vocab + v] /= s;
  }
  return p;
}

// log N(z; mean, var I) written out directly.
inline double gaussian_logpdf(std::span<const double> z, std::span<const double> mean, double var) {
  double sq = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sq += (z[i] - mean[i]) * (z[i] - mean[i]);
  return -0.5 * static_cast<double>(z.size()) * std::log(2 * std::numbers::pi * var) - sq / (2 * var);
}

// E[X_{0,l} | X_{u_k} = y_k, X_{u,l} = obs] by enumeration over endpoints,
// using the forward law 0 -> u -> u_k directly rather than the bridge.
inline std::vector<double> two_time_mean(const JointDist& nu, std::span<const double> y_k, double u_k, double u,
                                         std::span<const double> obs, std::size_t position) {
  const Shape shape = nu.shape();
  const std::size_t V = shape.vocab;
  const auto at_k = ou_coeffs(u_k), at_u = ou_coeffs(u);
  const auto seqs = enumerate_sequences(shape);
  std::vector<double> logw(seqs.size(), -INFINITY);
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    if (nu.prob(i) <= 0.0) continue;
    double lw = std::log(nu.prob(i));
    for (std::size_t l = 0; l < shape.length; ++l) {
      StateVector e(V, 0.0);
      e[seqs[i][l]] = 1.0;
      if (l == position) {
        for (double& v : e) v *= at_u.c;
        lw += gaussian_logpdf(obs, e, at_u.sigma2);
      } else {
        for (double& v : e) v *= at_k.c;
        lw += gaussian_logpdf(y_k.subspan(l * V, V), e, at_k.sigma2);
      }
    }
    logw[i] = lw;
  }
  // The X_{u_k,l} | X_{u,l} factor does not depend on the endpoint.
  const auto post = normalize_log_weights(logw);
  std::vector<double> mean(V, 0.0);
  for (std::size_t i = 0; i < seqs.size(); ++i) mean[seqs[i][position]] += post[i];
  return mean;
}

}  // namespace mcb::testing
