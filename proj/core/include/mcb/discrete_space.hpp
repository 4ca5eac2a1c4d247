#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mcb/random.hpp"
#include "mcb/types.hpp"

namespace mcb {

inline constexpr std::size_t kDefaultEnumerationCap = 4096;

/// Raised when V^L exceeds the configured enumeration cap.
class EnumerationLimitError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// V^L, or EnumerationLimitError when it exceeds cap.
std::size_t sequence_count(Shape shape, std::size_t cap = kDefaultEnumerationCap);

/// One-hot embedding; block l is e_{tokens[l]}.
StateVector encode(const TokenSequence& seq, std::size_t vocab);

/// Per-block argmax, ties to the lowest index.
TokenSequence decode_argmax(std::span<const double> x, Shape shape);

/// True when every block is exactly a standard basis vector.
bool is_one_hot(std::span<const double> x, Shape shape);

/// Big-endian index: sum_l w_l V^{L-1-l}.
std::size_t sequence_index(const TokenSequence& seq, std::size_t vocab);
TokenSequence sequence_at(std::size_t index, Shape shape);

/// All V^L sequences in big-endian index order.
std::vector<TokenSequence> enumerate_sequences(Shape shape,
                                               std::size_t cap = kDefaultEnumerationCap);

enum class JointKind { uniform, product, copy, dirichlet };

JointKind parse_joint_kind(std::string_view name);
std::string_view to_string(JointKind kind);

/// Explicit probability table over V^L with big-endian indexing.
class JointDist {
 public:
  static constexpr double kSumTolerance = 1e-12;

  /// Validates size, nonnegativity and normalization within kSumTolerance.
  JointDist(Shape shape, std::vector<double> probs, std::size_t cap = kDefaultEnumerationCap);

  static JointDist uniform(Shape shape);
  /// Outer product of per-position marginals; each must sum to 1.
  static JointDist product(const std::vector<std::vector<double>>& marginals);
  /// Uniform over the V constant sequences (w, ..., w).
  static JointDist copy(Shape shape);
  /// One normalized Dirichlet(alpha, ..., alpha) draw from the given seed.
  static JointDist dirichlet(Shape shape, double alpha, std::uint64_t seed);

  Shape shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double prob(std::size_t index) const { return probs_.at(index); }
  double prob(const TokenSequence& seq) const { return probs_.at(sequence_index(seq, shape_.vocab)); }

  /// Per-position marginal table, row-major L x V.
  std::vector<double> position_marginals() const;

  /// Shannon entropy in nats.
  double entropy() const;

  /// Inverse-CDF draw in index order.
  TokenSequence sample(Rng& rng) const;

  /// {"V": int, "L": int, "probs": [...]}
  std::string to_json() const;
  static JointDist from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static JointDist load(const std::filesystem::path& path);

 private:
  Shape shape_;
  std::vector<double> probs_;
};

/// Factory mirroring the CLI's gen-dist command. `marginals` is only used for
/// JointKind::product, `alpha` and `seed` only for JointKind::dirichlet.
JointDist make_joint(JointKind kind, Shape shape, double alpha = 1.0, std::uint64_t seed = 0,
                     const std::vector<std::vector<double>>& marginals = {});

}  // namespace mcb
