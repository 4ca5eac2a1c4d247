#include "mcb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mcb/parallel.hpp"
#include "mcb/random.hpp"
#include "mcb/stats.hpp"

namespace mcb {

std::vector<double> unigram_entropies(std::span<const TokenSequence> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  std::map<Token, std::size_t> counts;
  for (const auto& seq : samples) {
    counts.clear();
    for (Token t : seq) ++counts[t];
    const double n = static_cast<double>(seq.size());
    double h = 0.0;
    for (const auto& [token, c] : counts) {
      const double p = static_cast<double>(c) / n;
      h -= p * std::log(p);
    }
    out.push_back(h);
  }
  return out;
}

double unigram_entropy(std::span<const TokenSequence> samples) {
  if (samples.empty()) throw std::invalid_argument("unigram_entropy: no samples");
  const auto values = unigram_entropies(samples);
  double total = 0.0;
  for (double h : values) total += h;
  return total / static_cast<double>(values.size());
}

TvEstimate empirical_tv(std::span<const TokenSequence> samples, const JointDist& nu) {
  if (samples.empty()) throw std::invalid_argument("empirical_tv: no samples");
  const Shape shape = nu.shape();
  std::vector<std::size_t> counts(nu.size(), 0);
  const double n = static_cast<double>(samples.size());
  for (const auto& seq : samples) {
    if (seq.size() != shape.length) throw std::invalid_argument("empirical_tv: sequence length mismatch");
    ++counts[sequence_index(seq, shape.vocab)];
  }
  std::vector<double> freq(nu.size());
  for (std::size_t i = 0; i < freq.size(); ++i) freq[i] = static_cast<double>(counts[i]) / n;
  TvEstimate out;
  double first = 0.0, second = 0.0;
  for (std::size_t i = 0; i < freq.size(); ++i) {
    const double d = freq[i] - nu.prob(i);
    out.value += 0.5 * std::abs(d);
    const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    first += s * freq[i];
    second += s * s * freq[i];
  }
  out.standard_error = 0.5 * std::sqrt(std::max(0.0, second - first * first) / n);
  return out;
}

NllEstimate oracle_nll(std::span<const TokenSequence> samples, const JointDist& nu) {
  RunningStats stats;
  NllEstimate out;
  for (const auto& seq : samples) {
    const double p = nu.prob(seq);
    if (p > 0.0) {
      stats.push(-std::log(p));
    } else {
      ++out.zero_probability;
    }
  }
  out.mean = stats.mean();
  out.standard_error = stats.standard_error();
  out.counted = stats.count();
  return out;
}

FactorizationCheck factorization_check(const JointDist& nu, double t, std::span<const double> x) {
  const JointDist joint = joint_posterior(nu, t, x);
  const MarginalTable m = token_marginals(joint, t);
  const JointDist product = factorized_posterior(m);
  FactorizationCheck out;
  out.kl = kl_divergence(joint.probs(), product.probs());
  out.mi = multi_information(joint, m);
  out.abs_diff = std::abs(out.kl - out.mi);
  return out;
}

KernelMoments mcb_kernel_moments(const MarginalTable& m, std::span<const double> y, double u_k,
                                 double u_next) {
  const Shape shape = m.shape();
  const std::size_t d = shape.dim();
  if (y.size() != d) throw std::invalid_argument("mcb_kernel_moments: dimension mismatch");
  const BridgeCoeffs k = bridge_coeffs(u_next, u_k);
  const JointDist law = factorized_posterior(m);
  KernelMoments out{StateVector(d, 0.0), std::vector<double>(d * d, 0.0)};
  StateVector mu(d);
  for (std::size_t i = 0; i < law.size(); ++i) {
    const double q = law.prob(i);
    if (q == 0.0) continue;
    const StateVector x0 = encode(sequence_at(i, shape), shape.vocab);
    for (std::size_t a = 0; a < d; ++a) mu[a] = k.endpoint_weight * x0[a] + k.state_weight * y[a];
    for (std::size_t a = 0; a < d; ++a) {
      out.mean[a] += q * mu[a];
      for (std::size_t b = 0; b < d; ++b) out.cov[a * d + b] += q * mu[a] * mu[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) out.cov[a * d + b] -= out.mean[a] * out.mean[b];
    out.cov[a * d + a] += k.variance;
  }
  return out;
}

KernelMoments ddpm_kernel_moments(const MarginalTable& m, std::span<const double> y, double u_k,
                                  double u_next) {
  const std::size_t d = m.shape().dim();
  if (y.size() != d) throw std::invalid_argument("ddpm_kernel_moments: dimension mismatch");
  const BridgeParams bp = bridge_params(u_next, u_k, y, m.probs());
  KernelMoments out{bp.mean, std::vector<double>(d * d, 0.0)};
  for (std::size_t a = 0; a < d; ++a) out.cov[a * d + a] = bp.var;
  return out;
}

MomentResiduals moment_check(const MarginalTable& m, std::span<const double> y, double u_k,
                             double u_next) {
  const Shape shape = m.shape();
  const std::size_t d = shape.dim();
  const KernelMoments mcb = mcb_kernel_moments(m, y, u_k, u_next);
  const KernelMoments ddpm = ddpm_kernel_moments(m, y, u_k, u_next);
  const double beta = bridge_coeffs(u_next, u_k).endpoint_weight;

  MomentResiduals out;
  double sq = 0.0;
  for (std::size_t a = 0; a < d; ++a) sq += (mcb.mean[a] - ddpm.mean[a]) * (mcb.mean[a] - ddpm.mean[a]);
  out.mean_residual = std::sqrt(sq);

  const auto pi = m.probs();
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      double surplus = 0.0;
      if (a / shape.vocab == b / shape.vocab) surplus = (a == b ? pi[a] : 0.0) - pi[a] * pi[b];
      const double r = mcb.cov[a * d + b] - ddpm.cov[a * d + b] - beta * beta * surplus;
      out.cov_residual = std::max(out.cov_residual, std::abs(r));
    }
  }
  return out;
}

std::string GapReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "interval,node_t,u,weight,quad_weight,ddpm,ddpm_se,mcb,mcb_se,gap,gap_se\n";
  for (const auto& r : records) {
    out << r.interval << ',' << r.t << ',' << r.u << ',' << r.weight << ',' << r.quadrature_weight
        << ',' << r.ddpm_error << ',' << r.ddpm_se << ',' << r.mcb_error << ',' << r.mcb_se << ','
        << r.gap << ',' << r.gap_se << '\n';
  }
  return out.str();
}

namespace {

struct NodeStats {
  RunningStats ddpm, mcb, gap;
  void merge(const NodeStats& o) {
    ddpm.merge(o.ddpm);
    mcb.merge(o.mcb);
    gap.merge(o.gap);
  }
};

// One Monte Carlo draw of the three squared-error terms at node level u.
void gap_sample(const JointDist& nu, double u_k, double u, Rng& rng, NodeStats& acc) {
  const Shape shape = nu.shape();
  const std::size_t vocab = shape.vocab;
  // X0 ~ nu, X_u | X0 by OU over u, X_{u_k} | X_u by OU over u_k - u.
  const StateVector x0 = encode(nu.sample(rng), vocab);
  const StateVector x_u = forward_sample(x0, u, rng);
  const StateVector x_uk = forward_sample(x_u, u_k - u, rng);

  const MarginalTable m_u = token_marginals(joint_posterior(nu, u, x_u), u);
  const MarginalTable m_uk = token_marginals(joint_posterior(nu, u_k, x_uk), u_k);

  double err_ddpm = 0.0, err_mcb = 0.0;
  const std::span<const double> yk(x_uk), yu(x_u);
  for (std::size_t l = 0; l < shape.length; ++l) {
    const auto filtered = filtered_endpoint_mean(m_uk.row(l), yk.subspan(l * vocab, vocab), u_k, u,
                                                 yu.subspan(l * vocab, vocab));
    const auto target = m_u.row(l);
    const auto frozen = m_uk.row(l);
    for (std::size_t v = 0; v < vocab; ++v) {
      const double a = target[v] - frozen[v];
      const double b = target[v] - filtered[v];
      err_ddpm += a * a;
      err_mcb += b * b;
    }
  }
  acc.ddpm.push(err_ddpm);
  acc.mcb.push(err_mcb);
  acc.gap.push(err_ddpm - err_mcb);
}

}  // namespace

GapReport denoising_gap(const JointDist& nu, const NoiseGrid& grid, std::size_t nodes_per_interval,
                        std::size_t n_mc, std::uint64_t seed, std::size_t threads) {
  if (nodes_per_interval == 0) throw std::invalid_argument("denoising_gap: needs at least one node");
  if (n_mc < 1000) throw std::invalid_argument("denoising_gap: requires n_mc >= 1000");
  const double horizon = grid.horizon();

  struct Node {
    std::size_t interval;
    double t, u, u_k, quad;
  };
  std::vector<Node> nodes;
  GapReport report;
  report.samples_per_node = n_mc;
  report.intervals.resize(grid.steps());
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    const double gamma = grid.gap(k);
    if (!(gamma > 0.0)) {
      report.notes.push_back("interval " + std::to_string(k) + " skipped: zero width");
      continue;
    }
    const double t_k = grid.reverse_time(k);
    for (std::size_t j = 1; j <= nodes_per_interval; ++j) {
      const double frac = static_cast<double>(j) / static_cast<double>(nodes_per_interval + 1);
      const double t = t_k + frac * gamma;
      nodes.push_back({k, t, horizon - t, grid.level(k), gamma / static_cast<double>(nodes_per_interval)});
    }
  }

  constexpr std::size_t kBlock = 512;
  const std::size_t blocks = (n_mc + kBlock - 1) / kBlock;
  std::vector<NodeStats> partial(nodes.size() * blocks);
  parallel_for(
      partial.size(),
      [&](std::size_t job) {
        const std::size_t node = job / blocks;
        const std::size_t block = job % blocks;
        Rng rng = Rng::derived(seed, "denoising-gap", job);
        const std::size_t count = std::min(kBlock, n_mc - block * kBlock);
        for (std::size_t s = 0; s < count; ++s) {
          gap_sample(nu, nodes[node].u_k, nodes[node].u, rng, partial[job]);
        }
      },
      threads);

  double var_ddpm = 0.0, var_mcb = 0.0, var_gap = 0.0;
  std::vector<GapTotals> interval_var(grid.steps());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    NodeStats s;
    for (std::size_t b = 0; b < blocks; ++b) s.merge(partial[i * blocks + b]);
    const Node& node = nodes[i];
    GapRecord r;
    r.interval = node.interval;
    r.t = node.t;
    r.u = node.u;
    r.weight = girsanov_weight(node.u);
    r.quadrature_weight = node.quad;
    r.ddpm_error = s.ddpm.mean();
    r.ddpm_se = s.ddpm.standard_error();
    r.mcb_error = s.mcb.mean();
    r.mcb_se = s.mcb.standard_error();
    r.gap = s.gap.mean();
    r.gap_se = s.gap.standard_error();
    report.records.push_back(r);

    const double w = r.weight * r.quadrature_weight;
    GapTotals& it = report.intervals[node.interval];
    GapTotals& iv = interval_var[node.interval];
    it.ddpm += w * r.ddpm_error;
    it.mcb += w * r.mcb_error;
    it.gap += w * r.gap;
    iv.ddpm += w * w * r.ddpm_se * r.ddpm_se;
    iv.mcb += w * w * r.mcb_se * r.mcb_se;
    iv.gap += w * w * r.gap_se * r.gap_se;
    report.total.ddpm += w * r.ddpm_error;
    report.total.mcb += w * r.mcb_error;
    report.total.gap += w * r.gap;
    var_ddpm += w * w * r.ddpm_se * r.ddpm_se;
    var_mcb += w * w * r.mcb_se * r.mcb_se;
    var_gap += w * w * r.gap_se * r.gap_se;
  }
  for (std::size_t k = 0; k < grid.steps(); ++k) {
    report.intervals[k].ddpm_se = std::sqrt(interval_var[k].ddpm);
    report.intervals[k].mcb_se = std::sqrt(interval_var[k].mcb);
    report.intervals[k].gap_se = std::sqrt(interval_var[k].gap);
  }
  report.total.ddpm_se = std::sqrt(var_ddpm);
  report.total.mcb_se = std::sqrt(var_mcb);
  report.total.gap_se = std::sqrt(var_gap);
  return report;
}

}  // namespace mcb
