#include "mcb/random.hpp"

#include <stdexcept>

namespace mcb {

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  double total = 0.0;
  std::size_t last_positive = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      total += probs[i];
      last_positive = i;
    }
  }
  if (last_positive == probs.size()) {
    throw std::invalid_argument("sample_categorical: no category has positive mass");
  }
  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < last_positive; ++i) {
    if (probs[i] <= 0.0) continue;
    cumulative += probs[i];
    if (target < cumulative) return i;
  }
  // Rounding can leave target just above the running sum.
  return last_positive;
}

}  // namespace mcb
