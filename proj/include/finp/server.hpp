#pragma once

// Server-side aggregation: FedAvg, PCA-distance adaptive weighting and the
// rank-weighted lightweight rule, plus the risk-dispersion objective used
// for reporting.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "finp/nncore.hpp"

namespace finp::server {

// A point of the probability simplex; constructing one validates it.
class AggregationWeights {
 public:
  explicit AggregationWeights(std::vector<double> w);
  static AggregationWeights uniform(std::size_t k);

  std::span<const double> values() const { return w_; }
  std::size_t size() const { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }

 private:
  std::vector<double> w_;
};

struct PcaDistances {
  std::vector<double> p;
  std::size_t components = 0;  // retained principal components
};

// sum_k w_k theta_k, accumulated in client-id order.
nn::ModelParams weighted_average(std::span<const nn::ModelParams> models,
                                 const AggregationWeights& w);

AggregationWeights fedavg_weights(std::span<const std::size_t> sizes);
nn::ModelParams fedavg_aggregate(std::span<const nn::ModelParams> models,
                                 std::span<const std::size_t> sizes);

// Number of components kept: smallest m reaching 90% of the eigenvalue
// mass, clamped to [1, K-2] (1 when K == 2).
std::size_t retained_components(std::span<const double> eigenvalues, std::size_t k);

// updates[k] = theta_k - theta_global_prev, all of equal length. When
// components is set it overrides the variance rule.
PcaDistances pca_distances(std::span<const std::vector<double>> updates,
                           std::optional<std::size_t> components = std::nullopt);

AggregationWeights adaptive_weights(std::span<const double> p);

struct AlaWeights {
  AggregationWeights weights;
  bool fallback = false;  // every rho was 1; uniform weights used
};

AlaWeights ala_weights(std::span<const double> rho);

struct AlaResult {
  nn::ModelParams model;
  AggregationWeights weights;
  bool fallback = false;
};

AlaResult ala_aggregate(std::span<const nn::ModelParams> models, std::span<const double> rho);

// |p - mean(p) 1|_2 + |mean(p)|
double finp_server_objective(std::span<const double> p);

}  // namespace finp::server
