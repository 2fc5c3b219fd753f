#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "finp/nncore.hpp"
#include "finp/rng.hpp"

namespace finp::data {

struct Dataset {
  std::size_t dim = 0;
  std::size_t class_count = 0;
  std::vector<double> features;  // row-major, size() x dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }
  void validate() const;
  nn::Batch batch() const;
  nn::Batch batch(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;

  bool operator==(const Dataset&) const = default;
};

struct Partition {
  std::vector<std::vector<std::size_t>> shards;  // indices into the source dataset
};

// Class c is centred at separation * u_c with unit isotropic noise; u_c = e_c
// when C <= dim, otherwise fixed pseudo-random unit vectors.
Dataset synth_gaussian_mixture(std::size_t classes, std::size_t dim, std::size_t n_per_class,
                               double separation, Rng& rng);

// Per class, shares ~ Dir(alpha 1_K); each class is dealt out in those
// proportions (floors, remainder to the largest share). Redraws when a
// shard comes out smaller than min_size (at least 1), up to 100 attempts.
Partition dirichlet_partition(const Dataset& ds, std::size_t k, double alpha, Rng& rng, std::size_t min_size = 1);

// Shuffled, equal-size shards (remainder spread over the first shards).
Partition iid_partition(const Dataset& ds, std::size_t k, Rng& rng);

struct Split {
  Dataset train;
  Dataset test;
};

Split train_test_split(const Dataset& ds, double test_fraction, Rng& rng);

// One example per row: label, then dim feature columns. A header row is
// allowed when its first field is not numeric.
Dataset load_csv(const std::filesystem::path& path, std::size_t class_count = 0);
void write_csv(const std::filesystem::path& path, const Dataset& ds);

void write_partition_manifest(const std::filesystem::path& path, const Partition& p);
Partition read_partition_manifest(const std::filesystem::path& path);

}  // namespace finp::data
