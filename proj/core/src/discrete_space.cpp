#include "mcb/discrete_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace mcb {

std::size_t sequence_count(Shape shape, std::size_t cap) {
  if (shape.vocab == 0 || shape.length == 0) {
    throw std::invalid_argument("sequence space needs V >= 1 and L >= 1");
  }
  std::size_t count = 1;
  for (std::size_t l = 0; l < shape.length; ++l) {
    if (count > cap / shape.vocab) {
      throw EnumerationLimitError("V^L = " + std::to_string(shape.vocab) + "^" +
                                  std::to_string(shape.length) + " exceeds enumeration cap " +
                                  std::to_string(cap));
    }
    count *= shape.vocab;
  }
  if (count > cap) {
    throw EnumerationLimitError("V^L exceeds enumeration cap " + std::to_string(cap));
  }
  return count;
}

StateVector encode(const TokenSequence& seq, std::size_t vocab) {
  StateVector x(seq.size() * vocab, 0.0);
  for (std::size_t l = 0; l < seq.size(); ++l) {
    if (seq[l] >= vocab) {
      throw std::out_of_range("encode: token " + std::to_string(seq[l]) + " at position " +
                              std::to_string(l) + " is not below V = " + std::to_string(vocab));
    }
    x[l * vocab + seq[l]] = 1.0;
  }
  return x;
}

TokenSequence decode_argmax(std::span<const double> x, Shape shape) {
  if (x.size() != shape.dim()) throw std::invalid_argument("decode_argmax: dimension mismatch");
  TokenSequence out(shape.length);
  for (std::size_t l = 0; l < shape.length; ++l) {
    const auto block = x.subspan(l * shape.vocab, shape.vocab);
    // max_element returns the first maximum
    out[l] = static_cast<Token>(std::max_element(block.begin(), block.end()) - block.begin());
  }
  return out;
}

bool is_one_hot(std::span<const double> x, Shape shape) {
  if (x.size() != shape.dim()) return false;
  for (std::size_t l = 0; l < shape.length; ++l) {
    std::size_t ones = 0;
    for (std::size_t v = 0; v < shape.vocab; ++v) {
      const double value = x[l * shape.vocab + v];
      if (value == 1.0) {
        ++ones;
      } else if (value != 0.0) {
        return false;
      }
    }
    if (ones != 1) return false;
  }
  return true;
}

std::size_t sequence_index(const TokenSequence& seq, std::size_t vocab) {
  std::size_t index = 0;
  for (Token w : seq) {
    if (w >= vocab) throw std::out_of_range("sequence_index: token out of range");
    index = index * vocab + w;
  }
  return index;
}

TokenSequence sequence_at(std::size_t index, Shape shape) {
  TokenSequence seq(shape.length);
  for (std::size_t l = shape.length; l-- > 0;) {
    seq[l] = static_cast<Token>(index % shape.vocab);
    index /= shape.vocab;
  }
  if (index != 0) throw std::out_of_range("sequence_at: index beyond V^L");
  return seq;
}

std::vector<TokenSequence> enumerate_sequences(Shape shape, std::size_t cap) {
  const std::size_t n = sequence_count(shape, cap);
  std::vector<TokenSequence> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sequence_at(i, shape));
  return out;
}

JointKind parse_joint_kind(std::string_view name) {
  if (name == "uniform") return JointKind::uniform;
  if (name == "product") return JointKind::product;
  if (name == "copy") return JointKind::copy;
  if (name == "dirichlet") return JointKind::dirichlet;
  throw std::invalid_argument("unknown distribution kind '" + std::string(name) + "'");
}

std::string_view to_string(JointKind kind) {
  switch (kind) {
    case JointKind::uniform: return "uniform";
    case JointKind::product: return "product";
    case JointKind::copy: return "copy";
    case JointKind::dirichlet: return "dirichlet";
  }
  return "unknown";
}

JointDist::JointDist(Shape shape, std::vector<double> probs, std::size_t cap)
    : shape_(shape), probs_(std::move(probs)) {
  const std::size_t n = sequence_count(shape_, cap);
  if (probs_.size() != n) {
    throw std::invalid_argument("JointDist: expected " + std::to_string(n) + " entries, got " +
                                std::to_string(probs_.size()));
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0) {
      throw std::invalid_argument("JointDist: entries must be finite and nonnegative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kSumTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "JointDist: entries sum to " << total << ", not 1";
    throw std::invalid_argument(msg.str());
  }
}

JointDist JointDist::uniform(Shape shape) {
  const std::size_t n = sequence_count(shape);
  return JointDist(shape, std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

JointDist JointDist::product(const std::vector<std::vector<double>>& marginals) {
  if (marginals.empty()) throw std::invalid_argument("product: needs at least one position");
  const Shape shape{marginals.front().size(), marginals.size()};
  for (const auto& row : marginals) {
    if (row.size() != shape.vocab) throw std::invalid_argument("product: ragged marginals");
    double total = 0.0;
    for (double p : row) {
      if (!std::isfinite(p) || p < 0.0) throw std::invalid_argument("product: negative marginal");
      total += p;
    }
    if (std::abs(total - 1.0) > kSumTolerance) {
      throw std::invalid_argument("product: each marginal must sum to 1");
    }
  }
  const std::size_t n = sequence_count(shape);
  std::vector<double> probs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenSequence seq = sequence_at(i, shape);
    double p = 1.0;
    for (std::size_t l = 0; l < shape.length; ++l) p *= marginals[l][seq[l]];
    probs[i] = p;
  }
  return JointDist(shape, std::move(probs));
}

JointDist JointDist::copy(Shape shape) {
  const std::size_t n = sequence_count(shape);
  std::vector<double> probs(n, 0.0);
  const double mass = 1.0 / static_cast<double>(shape.vocab);
  for (std::size_t v = 0; v < shape.vocab; ++v) {
    probs[sequence_index(TokenSequence(shape.length, static_cast<Token>(v)), shape.vocab)] = mass;
  }
  return JointDist(shape, std::move(probs));
}

JointDist JointDist::dirichlet(Shape shape, double alpha, std::uint64_t seed) {
  if (!(alpha > 0.0)) throw std::invalid_argument("dirichlet: alpha must be positive");
  const std::size_t n = sequence_count(shape);
  Rng rng = Rng::derived(seed, "dirichlet");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> probs(n);
  double total = 0.0;
  for (double& p : probs) {
    p = gamma(rng.engine());
    total += p;
  }
  if (!(total > 0.0)) throw std::runtime_error("dirichlet: all gamma draws underflowed");
  for (double& p : probs) p /= total;
  return JointDist(shape, std::move(probs));
}

std::vector<double> JointDist::position_marginals() const {
  std::vector<double> out(shape_.dim(), 0.0);
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (probs_[i] == 0.0) continue;
    const TokenSequence seq = sequence_at(i, shape_);
    for (std::size_t l = 0; l < shape_.length; ++l) out[l * shape_.vocab + seq[l]] += probs_[i];
  }
  return out;
}

double JointDist::entropy() const {
  double h = 0.0;
  for (double p : probs_) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

TokenSequence JointDist::sample(Rng& rng) const {
  return sequence_at(sample_categorical(probs_, rng), shape_);
}

std::string JointDist::to_json() const {
  nlohmann::json doc;
  doc["V"] = shape_.vocab;
  doc["L"] = shape_.length;
  doc["probs"] = probs_;
  return doc.dump(2) + "\n";
}

JointDist JointDist::from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("JointDist: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("V") || !doc.contains("L") || !doc.contains("probs")) {
    throw std::invalid_argument("JointDist: expected an object with V, L and probs");
  }
  try {
    const Shape shape{doc.at("V").get<std::size_t>(), doc.at("L").get<std::size_t>()};
    return JointDist(shape, doc.at("probs").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("JointDist: bad field type: ") + e.what());
  }
}

void JointDist::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_json();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

JointDist JointDist::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

JointDist make_joint(JointKind kind, Shape shape, double alpha, std::uint64_t seed,
                     const std::vector<std::vector<double>>& marginals) {
  switch (kind) {
    case JointKind::uniform: return JointDist::uniform(shape);
    case JointKind::copy: return JointDist::copy(shape);
    case JointKind::dirichlet: return JointDist::dirichlet(shape, alpha, seed);
    case JointKind::product: {
      if (marginals.size() != shape.length) {
        throw std::invalid_argument("product: need one marginal per position");
      }
      return JointDist::product(marginals);
    }
  }
  throw std::invalid_argument("make_joint: unknown kind");
}

}  // namespace mcb
