#include "finp/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "finp/error.hpp"
#include "finp/kernels.hpp"

namespace finp::curvature {

double top_eigenvalue(const nn::GradientFn& grad_fn, std::span<const double> theta, int iters,
                      double tol, Rng& rng) {
  if (iters < 1) fail(ErrorKind::config, "top_eigenvalue: iters must be >= 1");
  const std::size_t d = theta.size();
  std::vector<double> v(d);
  double nv = 0.0;
  for (int draw = 0; draw <= 3 && nv == 0.0; ++draw) {
    if (draw == 3) fail(ErrorKind::numeric, "top_eigenvalue: start vector stayed zero after 3 redraws");
    fill_normal(rng, v);
    nv = kernels::norm2(v);
  }
  kernels::scal(1.0 / nv, v);

  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    std::vector<double> w = nn::hvp(grad_fn, theta, v);
    const double next = kernels::dot(v, w);
    const double nw = kernels::norm2(w);
    const bool converged = it > 0 && std::abs(next - lambda) < tol * std::abs(next);
    lambda = next;
    if (converged || nw == 0.0) break;
    for (std::size_t i = 0; i < d; ++i) v[i] = w[i] / nw;
  }
  return lambda;
}

double top_eigenvalue(const nn::ModelParams& model, const nn::Batch& data, int iters, double tol,
                      Rng& rng) {
  if (data.size() == 0) fail(ErrorKind::data, "top_eigenvalue: empty data");
  return top_eigenvalue(nn::gradient_fn(model, data), model.flat(), iters, tol, rng);
}

double hessian_trace(const nn::GradientFn& grad_fn, std::span<const double> theta, int probes,
                     Rng& rng) {
  if (probes < 1) fail(ErrorKind::config, "hessian_trace: probes must be >= 1");
  std::vector<double> z(theta.size());
  double sum = 0.0;
  for (int p = 0; p < probes; ++p) {
    fill_rademacher(rng, z);
    sum += kernels::dot(z, nn::hvp(grad_fn, theta, z));
  }
  return sum / probes;
}

double hessian_trace(const nn::ModelParams& model, const nn::Batch& data, int probes, Rng& rng) {
  if (data.size() == 0) fail(ErrorKind::data, "hessian_trace: empty data");
  return hessian_trace(nn::gradient_fn(model, data), model.flat(), probes, rng);
}

namespace {

std::vector<double> mean_abs_pairwise(std::span<const double> x) {
  const std::size_t K = x.size();
  std::vector<double> out(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j)
      if (j != k) s += std::abs(x[k] - x[j]);
    out[k] = s / static_cast<double>(K - 1);
  }
  return out;
}

}  // namespace

Ranks overfitting_ranks(std::span<const double> lambdas, std::span<const double> traces) {
  const std::size_t K = lambdas.size();
  if (K < 2) fail(ErrorKind::data, "overfitting_ranks: need at least 2 clients");
  if (traces.size() != K) fail(ErrorKind::data, "overfitting_ranks: length mismatch");
  for (std::size_t k = 0; k < K; ++k)
    if (!std::isfinite(lambdas[k]) || !std::isfinite(traces[k]))
      fail(ErrorKind::numeric, "overfitting_ranks: non-finite curvature input");

  Ranks r;
  r.delta_bar = mean_abs_pairwise(lambdas);
  r.h_bar = mean_abs_pairwise(traces);
  const double max_d = *std::max_element(r.delta_bar.begin(), r.delta_bar.end());
  const double max_h = *std::max_element(r.h_bar.begin(), r.h_bar.end());
  r.rho.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double td = max_d > 0.0 ? r.delta_bar[k] / max_d : 0.0;
    const double th = max_h > 0.0 ? r.h_bar[k] / max_h : 0.0;
    r.rho[k] = std::clamp((td + th) / 2.0, 0.0, 1.0);
  }
  return r;
}

ClientCurvature estimate_client(const nn::ModelParams& model, const nn::Batch& shard,
                                const Options& opt, Rng& rng) {
  if (shard.size() == 0) fail(ErrorKind::data, "curvature: empty shard");
  const nn::Batch* data = &shard;
  nn::Batch sub;
  if (opt.subsample > 0 && shard.size() > opt.subsample) {
    std::vector<std::size_t> idx(shard.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(opt.subsample);
    std::sort(idx.begin(), idx.end());
    sub.dim = shard.dim;
    for (auto i : idx) {
      auto row = shard.row(i);
      sub.inputs.insert(sub.inputs.end(), row.begin(), row.end());
      sub.labels.push_back(shard.labels[i]);
    }
    data = &sub;
  }
  ClientCurvature c;
  c.lambda_max = top_eigenvalue(model, *data, opt.power_iters, opt.tol, rng);
  c.trace = hessian_trace(model, *data, opt.probes, rng);
  return c;
}

Report make_report(std::span<const ClientCurvature> per_client) {
  Report rep;
  for (const auto& c : per_client) {
    rep.lambda_max.push_back(c.lambda_max);
    rep.trace.push_back(c.trace);
  }
  Ranks r = overfitting_ranks(rep.lambda_max, rep.trace);
  rep.delta_bar = std::move(r.delta_bar);
  rep.h_bar = std::move(r.h_bar);
  rep.rho = std::move(r.rho);
  return rep;
}

}  // namespace finp::curvature
