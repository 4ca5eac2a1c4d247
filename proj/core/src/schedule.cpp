#include "mcb/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mcb {
namespace {

constexpr double kTaylorCutoff = 1e-5;

void require_time(double t, const char* what) {
  if (!std::isfinite(t) || t < 0.0) {
    throw std::invalid_argument(std::string(what) + ": time must be finite and nonnegative, got " +
                                std::to_string(t));
  }
}

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

double taylor_sinh(double a) {
  const double a2 = a * a;
  return a * (1.0 + a2 / 6.0 * (1.0 + a2 / 20.0));
}

}  // namespace

double OuCoeffs::sigma() const { return std::sqrt(sigma2); }

OuCoeffs ou_coeffs(double t) {
  require_time(t, "ou_coeffs");
  return {std::exp(-t), -std::expm1(-2.0 * t)};
}

double sinh_stable(double a) {
  if (std::abs(a) < kTaylorCutoff) return taylor_sinh(a);
  return std::sinh(a);
}

double sinh_ratio(double num, double den) {
  if (!(den > 0.0) || num < 0.0) {
    throw std::invalid_argument("sinh_ratio: requires num >= 0 and den > 0");
  }
  if (num == 0.0) return 0.0;
  if (den < kTaylorCutoff && num < kTaylorCutoff) return taylor_sinh(num) / taylor_sinh(den);
  // sinh(a)/sinh(b) = e^{a-b} (1 - e^{-2a}) / (1 - e^{-2b})
  return std::exp(num - den) * std::expm1(-2.0 * num) / std::expm1(-2.0 * den);
}

BridgeCoeffs bridge_coeffs(double s, double t) {
  require_time(s, "bridge_coeffs");
  require_time(t, "bridge_coeffs");
  if (!(t > 0.0) || s > t) {
    throw std::invalid_argument("bridge_coeffs: requires 0 <= s <= t and t > 0");
  }
  BridgeCoeffs out;
  out.endpoint_weight = sinh_ratio(t - s, t);
  out.state_weight = sinh_ratio(s, t);
  out.variance = 2.0 * sinh_stable(s) * out.endpoint_weight;
  return out;
}

BridgeParams bridge_params(double s, double t, std::span<const double> x_t,
                           std::span<const double> x0) {
  require_same_size(x_t.size(), x0.size(), "bridge_params");
  const BridgeCoeffs k = bridge_coeffs(s, t);
  BridgeParams out;
  out.mean.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    out.mean[i] = k.endpoint_weight * x0[i] + k.state_weight * x_t[i];
  }
  out.var = k.variance;
  return out;
}

StateVector forward_sample(std::span<const double> x0, double t, Rng& rng) {
  const OuCoeffs k = ou_coeffs(t);
  StateVector out(x0.begin(), x0.end());
  if (t == 0.0) return out;
  const double sigma = k.sigma();
  for (double& v : out) v = k.c * v + sigma * rng.normal();
  return out;
}

StateVector tweedie_score(std::span<const double> x, double t, std::span<const double> m) {
  require_time(t, "tweedie_score");
  require_same_size(x.size(), m.size(), "tweedie_score");
  if (t == 0.0) throw std::invalid_argument("tweedie_score: t = 0 has zero variance");
  const OuCoeffs k = ou_coeffs(t);
  StateVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (k.c * m[i] - x[i]) / k.sigma2;
  return out;
}

StateVector bridge_drift(double s, double t, std::span<const double> x_s,
                         std::span<const double> x_t) {
  require_time(s, "bridge_drift");
  require_same_size(x_s.size(), x_t.size(), "bridge_drift");
  if (!(s < t)) throw std::invalid_argument("bridge_drift: requires s < t");
  const double gap = t - s;
  const double ch = std::cosh(gap);
  const double sh = sinh_stable(gap);
  StateVector out(x_s.size());
  for (std::size_t i = 0; i < x_s.size(); ++i) out[i] = (x_t[i] - x_s[i] * ch) / sh;
  return out;
}

StateVector frozen_mean_drift(double t, std::span<const double> y,
                              std::span<const double> m_frozen, double horizon) {
  if (!(t < horizon)) throw std::invalid_argument("frozen_mean_drift: requires t < T");
  return bridge_drift(t, horizon, y, m_frozen);
}

double girsanov_weight(double u) {
  if (!(u > 0.0)) throw std::invalid_argument("girsanov_weight: requires u > 0");
  const OuCoeffs k = ou_coeffs(u);
  return (k.c * k.c) / (k.sigma2 * k.sigma2);
}

FmTime fm_time_map(double u) {
  if (!(u > 0.0) || !std::isfinite(u)) {
    throw std::invalid_argument("fm_time_map: requires finite u > 0");
  }
  const OuCoeffs k = ou_coeffs(u);
  const double scale = k.c + k.sigma();
  return {k.c / scale, scale};
}

double fm_time_inverse(double t_fm) {
  if (!(t_fm > 0.0) || t_fm > 1.0) {
    throw std::invalid_argument("fm_time_inverse: requires t_fm in (0, 1]");
  }
  const double s = 1.0 - t_fm;
  // e^{-u} = t / sqrt(t^2 + (1-t)^2)  =>  u = 0.5 log(1 + ((1-t)/t)^2)
  const double ratio = s / t_fm;
  return 0.5 * std::log1p(ratio * ratio);
}

NoiseGrid::NoiseGrid(std::vector<double> levels) : levels_(std::move(levels)) {
  if (levels_.size() < 2) throw std::invalid_argument("NoiseGrid: needs at least two levels");
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    const double u = levels_[k];
    if (!std::isfinite(u) || u < 0.0) throw std::invalid_argument("NoiseGrid: levels must be finite and >= 0");
    if (k + 1 < levels_.size() && u <= 0.0) {
      throw std::invalid_argument("NoiseGrid: only the last level may be zero");
    }
    if (k > 0 && !(u < levels_[k - 1])) {
      throw std::invalid_argument("NoiseGrid: levels must be strictly decreasing");
    }
  }
}

NoiseGrid NoiseGrid::uniform(double horizon, std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("NoiseGrid::uniform: steps must be positive");
  if (!(horizon > 0.0)) throw std::invalid_argument("NoiseGrid::uniform: horizon must be positive");
  std::vector<double> levels(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    levels[k] = horizon * (1.0 - static_cast<double>(k) / static_cast<double>(steps));
  }
  levels.back() = 0.0;
  return NoiseGrid(std::move(levels));
}

NoiseGrid NoiseGrid::geometric(double horizon, std::size_t steps, double min_level) {
  if (steps == 0) throw std::invalid_argument("NoiseGrid::geometric: steps must be positive");
  if (!(min_level > 0.0) || !(min_level < horizon)) {
    throw std::invalid_argument("NoiseGrid::geometric: requires 0 < min_level < horizon");
  }
  std::vector<double> levels;
  levels.reserve(steps + 1);
  if (steps == 1) {
    levels = {horizon, 0.0};
  } else {
    const double ratio = std::log(min_level / horizon) / static_cast<double>(steps - 1);
    for (std::size_t k = 0; k < steps; ++k) {
      levels.push_back(horizon * std::exp(ratio * static_cast<double>(k)));
    }
    levels.push_back(0.0);
  }
  return NoiseGrid(std::move(levels));
}

}  // namespace mcb
