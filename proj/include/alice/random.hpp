#ifndef ALICE_RANDOM_HPP
#define ALICE_RANDOM_HPP

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace alice {

using Rng = std::mt19937_64;

// Independent, reproducible streams derived from (seed, stream).
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

// Mixes a tag into a seed (splitmix64 finalizer) so that derived
// consumers do not share streams with the parent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline double rademacher(Rng& rng) { return (rng() >> 63) ? 1.0 : -1.0; }

inline void fill_rademacher(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) {
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = rademacher(rng);
}

inline void fill_normal(Rng& rng, Eigen::Ref<Eigen::VectorXd> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal(rng);
}

}  // namespace alice

#endif
