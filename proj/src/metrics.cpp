#include "finp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "finp/error.hpp"

namespace finp::metrics {

double cov(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::data, "cov: empty input");
  const double k = static_cast<double>(values.size());
  const double mu = std::accumulate(values.begin(), values.end(), 0.0) / k;
  if (!(mu > 0.0)) throw UndefinedMetric("cov: mean is not positive");
  double ss = 0.0;
  for (double v : values) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / k) / mu;
}

std::optional<double> try_cov(std::span<const double> values) {
  for (double v : values)
    if (!std::isfinite(v)) return std::nullopt;
  try {
    return cov(values);
  } catch (const UndefinedMetric&) {
    return std::nullopt;
  }
}

double fi(double c) {
  if (!(c >= 0.0)) fail(ErrorKind::data, "fi: cov must be >= 0");
  return 1.0 / (1.0 + c * c);
}

double eod(std::span<const double> acc) {
  if (acc.size() < 2) fail(ErrorKind::data, "eod: need at least 2 clients");
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  return *hi - *lo;
}

Convergence convergence_round(std::span<const double> test_acc, double delta) {
  if (test_acc.empty()) fail(ErrorKind::data, "convergence_round: empty series");
  if (!(delta > 0.0)) fail(ErrorKind::config, "convergence_round: delta must be > 0");
  const double best = *std::max_element(test_acc.begin(), test_acc.end());
  const double floor = best - delta;
  // Walk back from the end while the series stays within delta of its max.
  std::size_t first = test_acc.size();
  while (first > 0 && test_acc[first - 1] >= floor) --first;
  Convergence c;
  if (first == test_acc.size()) return c;
  c.round = static_cast<int>(first) + 1;
  c.censored = test_acc.size() > 1 && first + 1 == test_acc.size();
  return c;
}

LossFairness loss_fairness(std::span<const double> per_client_target_loss) {
  LossFairness out;
  out.cov = try_cov(per_client_target_loss);
  if (out.cov) out.fi = fi(*out.cov);
  return out;
}

MetricsRow make_row(int round, std::span<const double> sia_acc,
                    std::span<const double> target_loss, double train_acc, double test_acc) {
  MetricsRow r;
  r.round = round;
  r.train_acc = train_acc;
  r.test_acc = test_acc;
  const bool sia_defined =
      !sia_acc.empty() && std::all_of(sia_acc.begin(), sia_acc.end(), [](double v) { return std::isfinite(v); });
  if (sia_defined) {
    r.cov_sia = try_cov(sia_acc);
    if (r.cov_sia) r.fi_sia = fi(*r.cov_sia);
    if (sia_acc.size() >= 2) r.eod = eod(sia_acc);
    r.mean_sia = std::accumulate(sia_acc.begin(), sia_acc.end(), 0.0) / static_cast<double>(sia_acc.size());
    r.max_sia = *std::max_element(sia_acc.begin(), sia_acc.end());
  } else {
    r.mean_sia = r.max_sia = std::nan("");
  }
  const auto lf = loss_fairness(target_loss);
  r.cov_loss = lf.cov;
  r.fi_loss = lf.fi;
  return r;
}

}  // namespace finp::metrics
