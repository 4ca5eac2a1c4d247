#pragma once

// Closed-form Ornstein-Uhlenbeck kernels for dX = -X dt + sqrt(2) dB.
//
// Conventions: a forward noise level u >= 0 has contraction c_u = e^{-u} and
// variance sigma_u^2 = 1 - e^{-2u}. Reverse samplers walk a NoiseGrid of
// strictly decreasing levels T = u_0 > ... > u_K.

#include <cstddef>
#include <span>
#include <vector>

#include "mcb/random.hpp"
#include "mcb/types.hpp"

namespace mcb {

inline constexpr double kDefaultHorizon = 6.0;

struct OuCoeffs {
  double c = 1.0;       ///< e^{-t}
  double sigma2 = 0.0;  ///< 1 - e^{-2t}

  double sigma() const;
};

/// Forward transition coefficients at time t >= 0.
OuCoeffs ou_coeffs(double t);

/// sinh(a), switching to a three-term Taylor series for |a| < 1e-5.
double sinh_stable(double a);

/// sinh(num) / sinh(den) for 0 <= num and den > 0, evaluated without
/// overflow or cancellation.
double sinh_ratio(double num, double den);

/// Scalar coefficients of the pinned bridge X_s | X_0 = x0, X_t = x_t:
///   mean = endpoint_weight * x0 + state_weight * x_t, cov = variance * I.
struct BridgeCoeffs {
  double endpoint_weight = 0.0;  ///< sinh(t-s)/sinh(t)
  double state_weight = 0.0;     ///< sinh(s)/sinh(t)
  double variance = 0.0;         ///< 2 sinh(s) sinh(t-s) / sinh(t)
};

BridgeCoeffs bridge_coeffs(double s, double t);

struct BridgeParams {
  StateVector mean;
  double var = 0.0;
};

BridgeParams bridge_params(double s, double t, std::span<const double> x_t,
                           std::span<const double> x0);

/// Draws from N(c_t x0, sigma_t^2 I). Returns x0 unchanged at t = 0.
StateVector forward_sample(std::span<const double> x0, double t, Rng& rng);

/// (c_t m - x) / sigma_t^2; requires t > 0.
StateVector tweedie_score(std::span<const double> x, double t, std::span<const double> m);

/// Drift of the OU bridge pinned to x_t at time t, evaluated at (s, x_s):
///   (x_t - x_s cosh(t-s)) / sinh(t-s), for 0 <= s < t.
StateVector bridge_drift(double s, double t, std::span<const double> x_s,
                         std::span<const double> x_t);

/// Reverse-time drift toward a frozen endpoint:
///   (m - y cosh(T-t)) / sinh(T-t), for 0 <= t < T.
StateVector frozen_mean_drift(double t, std::span<const double> y,
                              std::span<const double> m_frozen, double horizon);

/// c_u^2 / sigma_u^4, the path-space weight of a squared denoising error at
/// level u. Equal to 1 / (4 sinh^2 u).
double girsanov_weight(double u);

/// OU level u mapped to the flow-matching convention x = t x_data + (1-t) eps.
/// An OU state y at level u corresponds to y / scale at time t_fm.
struct FmTime {
  double t_fm = 0.0;
  double scale = 1.0;  ///< c_u + sigma_u
};

FmTime fm_time_map(double u);

/// Inverse of fm_time_map: the OU level u with fm_time_map(u).t_fm == t_fm.
/// Defined for t_fm in (0, 1]; t_fm = 1 maps to u = 0.
double fm_time_inverse(double t_fm);

/// Strictly decreasing forward noise levels u_0 > u_1 > ... > u_K >= 0.
class NoiseGrid {
 public:
  explicit NoiseGrid(std::vector<double> levels);

  /// Uniform in reverse time: u_k = T (1 - k/K).
  static NoiseGrid uniform(double horizon, std::size_t steps);

  /// Geometric levels from T down to min_level over steps-1 intervals, then 0.
  static NoiseGrid geometric(double horizon, std::size_t steps, double min_level);

  std::span<const double> levels() const noexcept { return levels_; }
  double horizon() const noexcept { return levels_.front(); }
  std::size_t steps() const noexcept { return levels_.size() - 1; }
  double level(std::size_t k) const { return levels_.at(k); }
  /// gamma_k = u_k - u_{k+1}
  double gap(std::size_t k) const { return levels_.at(k) - levels_.at(k + 1); }
  /// t_k = T - u_k
  double reverse_time(std::size_t k) const { return horizon() - levels_.at(k); }
  bool ends_at_zero() const noexcept { return levels_.back() == 0.0; }

 private:
  std::vector<double> levels_;
};

}  // namespace mcb
