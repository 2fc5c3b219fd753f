#include "finp/server.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "finp/error.hpp"
#include "finp/kernels.hpp"
#include "finp/linalg.hpp"

namespace finp::server {

namespace {

bool all_equal(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); });
}

}  // namespace

AggregationWeights::AggregationWeights(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) fail(ErrorKind::data, "aggregation weights are empty");
  double s = 0.0;
  for (double x : w_) {
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorKind::numeric, "aggregation weight outside [0, inf)");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9)
    fail(ErrorKind::numeric, "aggregation weights sum to " + std::to_string(s));
}

AggregationWeights AggregationWeights::uniform(std::size_t k) {
  return AggregationWeights(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

nn::ModelParams weighted_average(std::span<const nn::ModelParams> models,
                                 const AggregationWeights& w) {
  if (models.empty()) fail(ErrorKind::data, "no models to aggregate");
  if (models.size() != w.size()) fail(ErrorKind::data, "weight count does not match model count");
  const auto& arch = models.front().arch();
  for (const auto& m : models)
    if (!(m.arch() == arch)) fail(ErrorKind::data, "cannot aggregate models of different shapes");
  if (models.size() == 1) return models.front();
  nn::ModelParams out(arch);
  for (std::size_t k = 0; k < models.size(); ++k) kernels::axpy(w[k], models[k].flat(), out.flat());
  return out;
}

AggregationWeights fedavg_weights(std::span<const std::size_t> sizes) {
  if (sizes.empty()) fail(ErrorKind::data, "fedavg: no clients");
  std::size_t total = 0;
  for (auto s : sizes) {
    if (s == 0) fail(ErrorKind::data, "fedavg: client with zero examples");
    total += s;
  }
  std::vector<double> w(sizes.size());
  for (std::size_t k = 0; k < sizes.size(); ++k)
    w[k] = static_cast<double>(sizes[k]) / static_cast<double>(total);
  return AggregationWeights(std::move(w));
}

nn::ModelParams fedavg_aggregate(std::span<const nn::ModelParams> models,
                                 std::span<const std::size_t> sizes) {
  if (models.size() != sizes.size()) fail(ErrorKind::data, "fedavg: size count mismatch");
  return weighted_average(models, fedavg_weights(sizes));
}

std::size_t retained_components(std::span<const double> eigenvalues, std::size_t k) {
  const std::size_t cap = k > 2 ? k - 2 : 1;
  double total = 0.0;
  for (double l : eigenvalues) total += std::max(l, 0.0);
  std::size_t m = 1;
  if (total > 0.0) {
    double acc = 0.0;
    for (m = 0; m < eigenvalues.size();) {
      acc += std::max(eigenvalues[m], 0.0);
      ++m;
      if (acc >= 0.9 * total) break;
    }
  }
  return std::clamp<std::size_t>(m, 1, cap);
}

PcaDistances pca_distances(std::span<const std::vector<double>> updates,
                           std::optional<std::size_t> components) {
  const std::size_t K = updates.size();
  if (K < 2) fail(ErrorKind::data, "pca_distances: need at least 2 updates");
  const std::size_t d = updates.front().size();
  for (const auto& u : updates)
    if (u.size() != d) fail(ErrorKind::data, "pca_distances: updates differ in length");

  std::vector<double> mean(d, 0.0);
  for (const auto& u : updates) kernels::axpy(1.0 / static_cast<double>(K), u, mean);
  std::vector<std::vector<double>> centered(K, std::vector<double>(d));
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < d; ++i) centered[k][i] = updates[k][i] - mean[i];
  }

  // K x K Gram matrix of the centered updates.
  std::vector<double> gram(K * K);
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = a; b < K; ++b)
      gram[a * K + b] = gram[b * K + a] = kernels::dot(centered[a], centered[b]);

  const auto eig = linalg::symmetric_eigen(gram, K);
  std::vector<double> lam = eig.values;
  const double top = std::max(lam.front(), 0.0);
  for (double& l : lam)
    if (l <= 1e-12 * top) l = 0.0;

  PcaDistances out;
  out.components = components ? *components : retained_components(lam, K);
  if (out.components < 1 || out.components > K)
    fail(ErrorKind::config, "pca_distances: component count out of range");
  // Centered update k has coordinate sqrt(lam_j) * U[k][j] along principal
  // direction j, so its squared residual is the discarded eigen-mass.
  out.p.assign(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) {
    double r2 = 0.0;
    for (std::size_t j = out.components; j < K; ++j) {
      const double u = eig.vector(k, j);
      r2 += lam[j] * u * u;
    }
    out.p[k] = std::sqrt(std::max(r2, 0.0));
  }
  return out;
}

AggregationWeights adaptive_weights(std::span<const double> p) {
  const std::size_t K = p.size();
  if (K < 2) fail(ErrorKind::data, "adaptive_weights: need at least 2 clients");
  for (double x : p)
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorKind::numeric, "adaptive_weights: bad distance");
  if (all_equal(p)) return AggregationWeights::uniform(K);
  const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(K);
  const double eps = 1e-8 + 1e-3 * mean;
  std::vector<double> w(K);
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    w[k] = 1.0 / (p[k] + eps);
    s += w[k];
  }
  for (double& x : w) x /= s;
  return AggregationWeights(std::move(w));
}

AlaWeights ala_weights(std::span<const double> rho) {
  const std::size_t K = rho.size();
  if (K == 0) fail(ErrorKind::data, "ala: no clients");
  for (double r : rho)
    if (!(r >= 0.0 && r <= 1.0)) fail(ErrorKind::data, "ala: rho outside [0, 1]");
  double s = 0.0;
  for (double r : rho) s += 1.0 - r;
  if (s <= 0.0) return {AggregationWeights::uniform(K), true};
  if (all_equal(rho)) return {AggregationWeights::uniform(K), false};
  std::vector<double> w(K);
  for (std::size_t k = 0; k < K; ++k) w[k] = (1.0 - rho[k]) / s;
  return {AggregationWeights(std::move(w)), false};
}

AlaResult ala_aggregate(std::span<const nn::ModelParams> models, std::span<const double> rho) {
  if (models.size() != rho.size()) fail(ErrorKind::data, "ala: rho count mismatch");
  auto aw = ala_weights(rho);
  nn::ModelParams m = weighted_average(models, aw.weights);
  return {std::move(m), std::move(aw.weights), aw.fallback};
}

double finp_server_objective(std::span<const double> p) {
  if (p.empty()) fail(ErrorKind::data, "objective: empty risk vector");
  const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
  double dev = 0.0;
  for (double x : p) dev += (x - mean) * (x - mean);
  return std::sqrt(dev) + std::abs(mean);
}

}  // namespace finp::server
