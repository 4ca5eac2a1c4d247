#include "mcb/marginal_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "mcb/random.hpp"

namespace mcb {
namespace {

constexpr double kNucleusSlack = 1e-12;

void softmax_rows(std::span<double> logits, Shape shape) {
  for (std::size_t l = 0; l < shape.length; ++l) {
    auto row = logits.subspan(l * shape.vocab, shape.vocab);
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
      v = std::exp(v - peak);
      total += v;
    }
    for (double& v : row) v /= total;
  }
}

double loss_weight(LossWeighting weighting, const OuCoeffs& k) {
  switch (weighting) {
    case LossWeighting::constant: return 1.0;
    case LossWeighting::snr: return std::min(k.c * k.c / k.sigma2, 100.0);
  }
  return 1.0;
}

template <typename DrawFn>
TrainResult train_impl(Shape shape, const TrainConfig& cfg, DrawFn&& draw) {
  cfg.validate();
  MlpPredictor model(shape, cfg.hidden, derive_seed(cfg.seed, "init"));
  model.set_config(cfg);
  Rng rng = Rng::derived(cfg.seed, "train");
  std::uniform_real_distribution<double> level_dist(cfg.u_min, cfg.horizon);

  std::vector<double> grad(model.parameters().size());
  std::vector<double> noise(shape.dim());
  StateVector x(shape.dim());
  std::vector<double> curve;
  curve.reserve(cfg.steps);
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const TokenSequence w = draw(rng);
      const double u = level_dist(rng.engine());
      const OuCoeffs k = ou_coeffs(u);
      const double sigma = k.sigma();
      rng.fill_normal(noise);
      const StateVector x0 = encode(w, shape.vocab);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = k.c * x0[i] + sigma * noise[i];
      loss += model.accumulate_gradient(x, u, w, loss_weight(cfg.weighting, k) * inv_batch, grad);
    }
    if (!std::isfinite(loss)) {
      throw TrainingDivergedError(step, "training diverged at step " + std::to_string(step));
    }
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * grad[i];
    curve.push_back(loss);
  }
  return {std::move(model), std::move(curve)};
}

}  // namespace

MarginalTable OraclePredictor::predict(std::span<const double> x, double u) const {
  return token_marginals(joint_posterior(nu_, u, x), u);
}

LossWeighting parse_loss_weighting(std::string_view name) {
  if (name == "constant") return LossWeighting::constant;
  if (name == "snr") return LossWeighting::snr;
  throw std::invalid_argument("unknown loss weighting '" + std::string(name) + "'");
}

std::string_view to_string(LossWeighting weighting) {
  return weighting == LossWeighting::snr ? "snr" : "constant";
}

void TrainConfig::validate() const {
  if (batch == 0 || hidden == 0) throw std::invalid_argument("TrainConfig: counts must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
  if (!(u_min > 0.0) || !(u_min < horizon)) {
    throw std::invalid_argument("TrainConfig: requires 0 < u_min < horizon");
  }
}

MlpPredictor::MlpPredictor(Shape shape, std::size_t hidden, std::uint64_t seed)
    : shape_(shape), hidden_(hidden) {
  if (shape_.dim() == 0 || hidden_ == 0) throw std::invalid_argument("MlpPredictor: empty shape");
  const Offsets o = offsets();
  params_.resize(o.total);
  Rng rng(seed);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(input_width()));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
  for (std::size_t i = o.w1; i < o.w2; ++i) params_[i] = s1 * (2.0 * rng.uniform() - 1.0);
  for (std::size_t i = o.w2; i < o.total; ++i) params_[i] = s2 * (2.0 * rng.uniform() - 1.0);
  config_.hidden = hidden;
}

MlpPredictor::Offsets MlpPredictor::offsets() const {
  Offsets o{};
  const std::size_t d = shape_.dim();
  o.w1 = 0;
  o.b1 = o.w1 + hidden_ * input_width();
  o.w2 = o.b1 + hidden_;
  o.b2 = o.w2 + d * hidden_;
  o.total = o.b2 + d;
  return o;
}

void MlpPredictor::forward(std::span<const double> x, double u, std::vector<double>& input,
                           std::vector<double>& hidden, std::vector<double>& probs) const {
  const std::size_t d = shape_.dim();
  if (x.size() != d) throw std::invalid_argument("MlpPredictor: dimension mismatch");
  const OuCoeffs k = ou_coeffs(u);
  const Offsets o = offsets();
  const std::size_t in = input_width();
  // c_u x keeps the signal-to-noise scale and lets x drop out as u grows.
  input.resize(in);
  for (std::size_t i = 0; i < d; ++i) input[i] = k.c * x[i];
  input[d] = k.c;
  input[d + 1] = k.sigma();

  hidden.resize(hidden_);
  for (std::size_t h = 0; h < hidden_; ++h) {
    const double* w = params_.data() + o.w1 + h * in;
    double acc = params_[o.b1 + h];
    for (std::size_t i = 0; i < in; ++i) acc += w[i] * input[i];
    hidden[h] = std::tanh(acc);
  }
  probs.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double* w = params_.data() + o.w2 + j * hidden_;
    double acc = params_[o.b2 + j];
    for (std::size_t h = 0; h < hidden_; ++h) acc += w[h] * hidden[h];
    probs[j] = acc;
  }
  softmax_rows(probs, shape_);
}

MarginalTable MlpPredictor::predict(std::span<const double> x, double u) const {
  std::vector<double> input, hidden, probs;
  forward(x, u, input, hidden, probs);
  return MarginalTable(shape_, std::move(probs), u);
}

double MlpPredictor::accumulate_gradient(std::span<const double> x, double u,
                                         const TokenSequence& target, double weight,
                                         std::span<double> grad) const {
  if (grad.size() != params_.size()) throw std::invalid_argument("accumulate_gradient: grad size");
  if (target.size() != shape_.length) throw std::invalid_argument("accumulate_gradient: target length");
  std::vector<double> input, hidden, probs;
  forward(x, u, input, hidden, probs);
  const Offsets o = offsets();
  const std::size_t d = shape_.dim();
  const std::size_t in = input_width();

  double loss = 0.0;
  // dL/dlogit = weight (p - onehot)
  std::vector<double> dlogits(d);
  for (std::size_t l = 0; l < shape_.length; ++l) {
    const std::size_t base = l * shape_.vocab;
    loss -= weight * std::log(probs[base + target[l]]);
    for (std::size_t v = 0; v < shape_.vocab; ++v) {
      dlogits[base + v] = weight * (probs[base + v] - (v == target[l] ? 1.0 : 0.0));
    }
  }
  std::vector<double> dhidden(hidden_, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double g = dlogits[j];
    const double* w = params_.data() + o.w2 + j * hidden_;
    double* gw = grad.data() + o.w2 + j * hidden_;
    for (std::size_t h = 0; h < hidden_; ++h) {
      gw[h] += g * hidden[h];
      dhidden[h] += g * w[h];
    }
    grad[o.b2 + j] += g;
  }
  for (std::size_t h = 0; h < hidden_; ++h) {
    const double g = dhidden[h] * (1.0 - hidden[h] * hidden[h]);
    double* gw = grad.data() + o.w1 + h * in;
    for (std::size_t i = 0; i < in; ++i) gw[i] += g * input[i];
    grad[o.b1 + h] += g;
  }
  return loss;
}

std::string MlpPredictor::to_json() const {
  const Offsets o = offsets();
  auto slice = [&](std::size_t a, std::size_t b) {
    return std::vector<double>(params_.begin() + static_cast<std::ptrdiff_t>(a),
                               params_.begin() + static_cast<std::ptrdiff_t>(b));
  };
  nlohmann::json doc;
  doc["widths"] = {input_width(), hidden_, shape_.dim()};
  doc["weights"] = {slice(o.w1, o.b1), slice(o.b1, o.w2), slice(o.w2, o.b2), slice(o.b2, o.total)};
  doc["config"] = {
      {"V", shape_.vocab},
      {"L", shape_.length},
      {"steps", config_.steps},
      {"batch", config_.batch},
      {"learning_rate", config_.learning_rate},
      {"hidden", hidden_},
      {"u_min", config_.u_min},
      {"horizon", config_.horizon},
      {"weighting", std::string(to_string(config_.weighting))},
      {"seed", config_.seed},
  };
  return doc.dump() + "\n";
}

MlpPredictor MlpPredictor::from_json(std::string_view text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    const auto widths = doc.at("widths").get<std::vector<std::size_t>>();
    const auto& cfg = doc.at("config");
    const Shape shape{cfg.at("V").get<std::size_t>(), cfg.at("L").get<std::size_t>()};
    if (widths.size() != 3 || widths[0] != shape.dim() + 2 || widths[2] != shape.dim()) {
      throw std::invalid_argument("predictor widths do not match V and L");
    }
    MlpPredictor model(shape, widths[1], 0);
    const auto blocks = doc.at("weights").get<std::vector<std::vector<double>>>();
    const Offsets o = model.offsets();
    const std::vector<std::size_t> expected = {o.b1 - o.w1, o.w2 - o.b1, o.b2 - o.w2, o.total - o.b2};
    if (blocks.size() != expected.size()) throw std::invalid_argument("predictor needs 4 weight arrays");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      if (blocks[i].size() != expected[i]) {
        throw std::invalid_argument("predictor weight array " + std::to_string(i) + " has size " +
                                    std::to_string(blocks[i].size()) + ", expected " +
                                    std::to_string(expected[i]));
      }
      std::copy(blocks[i].begin(), blocks[i].end(), model.params_.begin() + static_cast<std::ptrdiff_t>(pos));
      pos += blocks[i].size();
    }
    TrainConfig tc;
    tc.steps = cfg.value("steps", tc.steps);
    tc.batch = cfg.value("batch", tc.batch);
    tc.learning_rate = cfg.value("learning_rate", tc.learning_rate);
    tc.hidden = widths[1];
    tc.u_min = cfg.value("u_min", tc.u_min);
    tc.horizon = cfg.value("horizon", tc.horizon);
    tc.weighting = parse_loss_weighting(cfg.value("weighting", std::string("constant")));
    tc.seed = cfg.value("seed", tc.seed);
    model.config_ = tc;
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("predictor JSON: ") + e.what());
  }
}

void MlpPredictor::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_json();
}

MlpPredictor MlpPredictor::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

TrainResult train_predictor(const JointDist& nu, const TrainConfig& cfg) {
  return train_impl(nu.shape(), cfg, [&nu](Rng& rng) { return nu.sample(rng); });
}

TrainResult train_predictor(std::span<const TokenSequence> corpus, Shape shape,
                            const TrainConfig& cfg) {
  if (corpus.empty()) throw std::invalid_argument("train_predictor: empty corpus");
  for (const auto& seq : corpus) {
    if (seq.size() != shape.length) throw std::invalid_argument("train_predictor: corpus length mismatch");
    for (Token t : seq) {
      if (t >= shape.vocab) throw std::invalid_argument("train_predictor: corpus token out of range");
    }
  }
  return train_impl(shape, cfg, [corpus](Rng& rng) {
    const auto i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(corpus.size()));
    return corpus[std::min(i, corpus.size() - 1)];
  });
}

MarginalTable apply_temperature(const MarginalTable& m, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("apply_temperature: tau must be positive");
  }
  if (tau == 1.0) return m;
  const Shape shape = m.shape();
  std::vector<double> out(m.probs().begin(), m.probs().end());
  for (std::size_t l = 0; l < shape.length; ++l) {
    auto row = std::span<double>(out).subspan(l * shape.vocab, shape.vocab);
    double peak = -std::numeric_limits<double>::infinity();
    for (double& p : row) {
      p = p > 0.0 ? std::log(p) / tau : -std::numeric_limits<double>::infinity();
      peak = std::max(peak, p);
    }
    double total = 0.0;
    for (double& p : row) {
      p = std::exp(p - peak);
      total += p;
    }
    for (double& p : row) p /= total;
  }
  return MarginalTable(shape, std::move(out), m.level());
}

MarginalTable apply_nucleus(const MarginalTable& m, double p) {
  if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("apply_nucleus: p must lie in (0, 1]");
  const Shape shape = m.shape();
  std::vector<double> out(m.probs().begin(), m.probs().end());
  std::vector<std::size_t> order(shape.vocab);
  for (std::size_t l = 0; l < shape.length; ++l) {
    auto row = std::span<double>(out).subspan(l * shape.vocab, shape.vocab);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&row](std::size_t a, std::size_t b) { return row[a] > row[b]; });
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    double kept = 0.0;
    std::size_t cut = shape.vocab;
    for (std::size_t r = 0; r < shape.vocab; ++r) {
      kept += row[order[r]];
      if (kept >= p * total - kNucleusSlack) {
        cut = r + 1;
        break;
      }
    }
    for (std::size_t r = cut; r < shape.vocab; ++r) row[order[r]] = 0.0;
    for (double& v : row) v /= kept;
  }
  return MarginalTable(shape, std::move(out), m.level());
}

MarginalTable apply_decoding(const MarginalTable& m, double tau, double p) {
  if (tau == 1.0 && p == 1.0) return m;
  return apply_nucleus(apply_temperature(m, tau), p);
}

double mean_row_entropy(const MarginalTable& m) {
  const Shape shape = m.shape();
  double total = 0.0;
  for (std::size_t l = 0; l < shape.length; ++l) {
    for (double p : m.row(l)) {
      if (p > 0.0) total -= p * std::log(p);
    }
  }
  return total / static_cast<double>(shape.length);
}

}  // namespace mcb
