#include "finp/rng.hpp"

namespace finp {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng substream(std::uint64_t seed, Stream purpose, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x5851f42d4c957f2dULL));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

void fill_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& x : out) x = n(rng);
}

void fill_rademacher(Rng& rng, std::span<double> out) {
  // One 64-bit draw yields 64 signs.
  std::uint64_t bits = 0;
  int left = 0;
  for (double& x : out) {
    if (left == 0) {
      bits = rng();
      left = 64;
    }
    x = (bits & 1u) ? 1.0 : -1.0;
    bits >>= 1;
    --left;
  }
}

}  // namespace finp
