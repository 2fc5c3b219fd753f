#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>

namespace finp::metrics {

// Raised by cov() when the mean is not positive; CSV/JSON render the value
// as missing instead of 0.
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Population standard deviation over mean.
double cov(std::span<const double> values);
std::optional<double> try_cov(std::span<const double> values);

double fi(double cov);

// max_i values - min_i values
double eod(std::span<const double> acc);

struct Convergence {
  std::optional<int> round;  // 1-indexed
  bool censored = false;     // the qualifying round is the last one observed
};

Convergence convergence_round(std::span<const double> test_acc, double delta);

struct LossFairness {
  std::optional<double> cov;
  std::optional<double> fi;
};

LossFairness loss_fairness(std::span<const double> per_client_target_loss);

struct MetricsRow {
  int round = 0;
  std::optional<double> cov_sia, fi_sia, cov_loss, fi_loss, eod;
  double mean_sia = 0.0;
  double max_sia = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

MetricsRow make_row(int round, std::span<const double> sia_acc,
                    std::span<const double> target_loss, double train_acc, double test_acc);

}  // namespace finp::metrics
