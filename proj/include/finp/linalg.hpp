#pragma once

#include <cstddef>
#include <vector>

namespace finp::linalg {

struct SymmetricEigen {
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // column j (stored as vectors[i*n + j]) pairs with values[j]
  std::size_t n = 0;
  double vector(std::size_t i, std::size_t j) const { return vectors[i * n + j]; }
};

// Cyclic Jacobi rotations on a dense symmetric n x n matrix (row-major).
// Intended for small n (the K x K Gram matrices of the aggregator).
SymmetricEigen symmetric_eigen(std::vector<double> a, std::size_t n);

}  // namespace finp::linalg
