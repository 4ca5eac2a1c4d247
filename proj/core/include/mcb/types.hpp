#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mcb {

using Token = std::uint32_t;

/// A length-L word over a V-symbol vocabulary.
using TokenSequence = std::vector<Token>;

/// A point in R^(L*V); block l occupies indices [l*V, (l+1)*V).
using StateVector = std::vector<double>;

/// Vocabulary size and sequence length of a discrete sequence space.
struct Shape {
  std::size_t vocab = 0;
  std::size_t length = 0;

  constexpr std::size_t dim() const noexcept { return vocab * length; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

}  // namespace mcb
