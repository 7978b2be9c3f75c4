#pragma once

#include "conflearn/common.hpp"

#include <random>
#include <span>

namespace conflearn {

/// Seedable generator whose every derived draw is reproducible bit-for-bit
/// across platforms. The engine output of mt19937_64 is fixed by the
/// standard; the transforms below replace the implementation-defined
/// std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal by the Marsaglia polar method.
  double normal();

  /// Index drawn proportionally to nonnegative `probs` (need not be
  /// normalized).
  Index categorical(std::span<const double> probs);

  /// Uniform integer in [0, n).
  Index below(Index n);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<Index> permutation(Index n);

  Vector normal_vector(Index d);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives an independent stream seed from a base seed and a tag, so that
/// (trial seed, purpose) pairs never share a stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

}  // namespace conflearn
