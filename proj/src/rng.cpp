#include "conflearn/rng.hpp"

#include <cmath>
#include <numeric>

namespace conflearn {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double scale = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * scale;
  has_spare_ = true;
  return u * scale;
}

Index Rng::categorical(std::span<const double> probs) {
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (probs.empty() || !(total > 0.0)) {
    throw ArgumentError("categorical: probabilities must have positive mass");
  }
  const double target = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (target < acc) return static_cast<Index>(i);
  }
  // Round-off can leave target == total; return the last positive entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<Index>(i);
  }
  return 0;
}

Index Rng::below(Index n) {
  if (n <= 0) throw ArgumentError("below: n must be positive");
  const auto bound = static_cast<std::uint64_t>(n);
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t draw;
  do {
    draw = engine_();
  } while (draw >= limit);
  return static_cast<Index>(draw % bound);
}

std::vector<Index> Rng::permutation(Index n) {
  std::vector<Index> out(static_cast<std::size_t>(n));
  std::iota(out.begin(), out.end(), Index{0});
  for (Index i = n - 1; i > 0; --i) {
    std::swap(out[static_cast<std::size_t>(i)],
              out[static_cast<std::size_t>(below(i + 1))]);
  }
  return out;
}

Vector Rng::normal_vector(Index d) {
  Vector z(d);
  for (Index i = 0; i < d; ++i) z(i) = normal();
  return z;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace conflearn
