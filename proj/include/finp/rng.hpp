#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace finp {

using Rng = std::mt19937_64;

// Purpose tags for derived streams. Adding a purpose never perturbs the
// streams of the existing ones.
enum class Stream : std::uint64_t {
  data_gen = 1,
  partition,
  split,
  targets,
  init,
  shuffle,
  penalty,
  curvature,
  probe_penalty,
  tie_break,
};

std::uint64_t splitmix64(std::uint64_t x);

// Independent generator for (seed, purpose, a, b); a and b are usually the
// client id and round number.
Rng substream(std::uint64_t seed, Stream purpose, std::uint64_t a = 0, std::uint64_t b = 0);

void fill_normal(Rng& rng, std::span<double> out);
void fill_rademacher(Rng& rng, std::span<double> out);

}  // namespace finp
