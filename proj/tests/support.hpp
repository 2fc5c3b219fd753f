#pragma once

// Helpers shared by the unit tests: random models and batches, plus
// finite-difference oracles that only use forward() / loss().

#include <cmath>
#include <vector>

#include "finp/nncore.hpp"
#include "finp/rng.hpp"

namespace testing {

inline finp::nn::Batch random_batch(std::size_t n, std::size_t dim, std::size_t classes, finp::Rng& rng) {
  finp::nn::Batch b;
  b.dim = dim;
  b.inputs.resize(n * dim);
  finp::fill_normal(rng, b.inputs);
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(lab(rng));
  return b;
}

inline finp::nn::ModelParams random_model(const finp::nn::Architecture& arch, finp::Rng& rng,
                                          double bias_scale = 0.1) {
  auto m = finp::nn::init_model(arch, rng);
  // init_model zeroes biases; give them some spread so relu kinks move around.
  std::normal_distribution<double> n(0.0, bias_scale);
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const auto off = arch.layer_offset(l) + arch.layer_sizes[l + 1] * arch.layer_sizes[l];
    for (std::size_t i = 0; i < arch.layer_sizes[l + 1]; ++i) m.flat()[off + i] = n(rng);
  }
  return m;
}

inline finp::nn::Architecture arch(std::vector<std::size_t> sizes,
                                   finp::nn::Activation a = finp::nn::Activation::tanh) {
  finp::nn::Architecture ar;
  ar.layer_sizes = std::move(sizes);
  ar.activation = a;
  return ar;
}

// Central differences of the loss.
inline std::vector<double> fd_grad(const finp::nn::ModelParams& model, const finp::nn::Batch& batch,
                                   double eps = 1e-4) {
  std::vector<double> g(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    auto plus = model, minus = model;
    plus.flat()[i] += eps;
    minus.flat()[i] -= eps;
    g[i] = (finp::nn::loss(plus, batch) - finp::nn::loss(minus, batch)) / (2 * eps);
  }
  return g;
}

// Dense Hessian from central differences of a gradient oracle, symmetrized.
inline std::vector<double> dense_hessian(const finp::nn::GradientFn& grad_fn, const std::vector<double>& theta,
                                         double eps = 1e-5) {
  const std::size_t d = theta.size();
  std::vector<double> h(d * d), gp(d), gm(d);
  for (std::size_t i = 0; i < d; ++i) {
    auto tp = theta, tm = theta;
    tp[i] += eps;
    tm[i] -= eps;
    grad_fn(tp, gp);
    grad_fn(tm, gm);
    for (std::size_t j = 0; j < d; ++j) h[j * d + i] = (gp[j] - gm[j]) / (2 * eps);
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) h[i * d + j] = h[j * d + i] = 0.5 * (h[i * d + j] + h[j * d + i]);
  return h;
}

// Input->logits Jacobian of one example by forward differences (C x dim).
inline std::vector<double> explicit_jacobian(const finp::nn::ModelParams& model, std::span<const double> x,
                                             double eps = 1e-6) {
  const std::size_t dim = x.size(), C = model.arch().output_dim();
  auto eval = [&](const std::vector<double>& in) {
    finp::nn::Batch b;
    b.dim = dim;
    b.inputs = in;
    b.labels = {0};
    return finp::nn::forward(model, b).values;
  };
  std::vector<double> base(x.begin(), x.end());
  std::vector<double> jac(C * dim);
  for (std::size_t c = 0; c < dim; ++c) {
    auto p = base, m = base;
    p[c] += eps;
    m[c] -= eps;
    const auto fp = eval(p), fm = eval(m);
    for (std::size_t r = 0; r < C; ++r) jac[r * dim + c] = (fp[r] - fm[r]) / (2 * eps);
  }
  return jac;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-12);
}

}  // namespace testing
