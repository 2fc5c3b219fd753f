#include "finp/kernels.hpp"

namespace finp::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scal_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void gemv_scalar(const double* w, const double* bias, const double* x, double* y,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
    y[r] = (bias ? bias[r] : 0.0) + s;
  }
}

void gemv_t_acc_scalar(const double* w, const double* y_bar, double* x_bar,
                       std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double a = y_bar[r];
    const double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) x_bar[c] += a * row[c];
  }
}

void ger_scalar(double a, const double* y, const double* x, double* w,
                std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double ay = a * y[r];
    double* row = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += ay * x[c];
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{Isa::scalar, dot_scalar,         axpy_scalar, scal_scalar,
                             gemv_scalar, gemv_t_acc_scalar, ger_scalar};
  return t;
}

}  // namespace finp::kernels
