#pragma once

// Dense inner-loop kernels used by the network, the curvature estimators and
// the aggregators. Every kernel has a portable scalar reference and an
// AVX2/FMA variant; the active table is picked once per process from CPU
// features (override with FINP_ISA=scalar|avx2).

#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>

namespace finp::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // x *= a
  void (*scal)(double a, double* x, std::size_t n);
  // y[r] = bias[r] + sum_c w[r*cols + c] * x[c]   (bias may be null)
  void (*gemv)(const double* w, const double* bias, const double* x, double* y,
               std::size_t rows, std::size_t cols);
  // x_bar[c] += sum_r w[r*cols + c] * y_bar[r]
  void (*gemv_t_acc)(const double* w, const double* y_bar, double* x_bar,
                     std::size_t rows, std::size_t cols);
  // w[r*cols + c] += a * y[r] * x[c]
  void (*ger)(double a, const double* y, const double* x, double* w,
              std::size_t rows, std::size_t cols);
};

const KernelTable& scalar_table();
// Throws std::runtime_error when the variant is not compiled in or the CPU
// lacks the instructions.
const KernelTable& table(Isa isa);
bool supported(Isa isa);
const KernelTable& active();

std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline void scal(double a, std::span<double> x) {
  active().scal(a, x.data(), x.size());
}
inline double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

}  // namespace finp::kernels

