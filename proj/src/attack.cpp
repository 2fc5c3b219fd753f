#include "finp/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "finp/error.hpp"

namespace finp::attack {

nn::Batch TargetSet::as_batch() const {
  nn::Batch b;
  b.dim = records.empty() ? 0 : records.front().x.size();
  for (const auto& r : records) {
    b.inputs.insert(b.inputs.end(), r.x.begin(), r.x.end());
    b.labels.push_back(r.label);
  }
  return b;
}

double SiaRoundResult::mean_accuracy() const {
  if (!defined) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < clients; ++i)
    for (std::size_t j = 0; j < clients; ++j) {
      total += count(i, j);
      if (i == j) hits += count(i, j);
    }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

TargetSet select_targets(std::span<const nn::Batch> shards, std::size_t n_per_client, Rng& rng) {
  TargetSet t;
  t.n_per_client = n_per_client;
  t.clients = shards.size();
  for (std::size_t k = 0; k < shards.size(); ++k) {
    const auto& shard = shards[k];
    if (shard.size() < n_per_client)
      fail(ErrorKind::data, "client " + std::to_string(k) + " has " + std::to_string(shard.size()) +
                                " records, fewer than n_per_client=" + std::to_string(n_per_client));
    std::vector<std::size_t> idx(shard.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first n entries are a uniform sample without replacement.
    for (std::size_t i = 0; i < n_per_client; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    for (std::size_t i = 0; i < n_per_client; ++i) {
      auto row = shard.row(idx[i]);
      t.records.push_back({{row.begin(), row.end()}, shard.labels[idx[i]], static_cast<int>(k)});
    }
  }
  return t;
}

SiaRoundResult attribute(const std::vector<std::vector<double>>& losses, const TargetSet& targets,
                         TieBreak tie_break, Rng* rng) {
  const std::size_t K = losses.size();
  if (K < 2) fail(ErrorKind::data, "sia: need at least 2 client models");
  if (K != targets.clients) fail(ErrorKind::data, "sia: model count does not match target set");
  if (tie_break == TieBreak::random && rng == nullptr)
    fail(ErrorKind::config, "sia: random tie-break needs an RNG");
  const std::size_t n = targets.records.size();

  SiaRoundResult res;
  res.clients = K;
  res.attribution.assign(K * K, 0);
  res.accuracy.assign(K, std::numeric_limits<double>::quiet_NaN());
  res.target_loss.assign(K, std::numeric_limits<double>::quiet_NaN());
  res.defined = n > 0;
  if (!res.defined) return res;

  std::vector<double> loss_sum(K, 0.0);
  std::vector<std::size_t> row_total(K, 0);
  std::vector<std::size_t> ties;
  for (std::size_t t = 0; t < n; ++t) {
    const auto src = static_cast<std::size_t>(targets.records[t].source);
    double best = std::numeric_limits<double>::infinity();
    ties.clear();
    for (std::size_t k = 0; k < K; ++k) {
      const double l = losses[k][t];
      if (l < best) {
        best = l;
        ties.assign(1, k);
      } else if (l == best) {
        ties.push_back(k);
      }
    }
    if (ties.empty()) ties.push_back(0);  // all losses NaN
    std::size_t pred = ties.front();
    if (tie_break == TieBreak::random && ties.size() > 1) {
      std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
      pred = ties[pick(*rng)];
    }
    ++res.attribution[src * K + pred];
    ++row_total[src];
    loss_sum[src] += losses[src][t];
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (row_total[k] == 0) continue;
    res.accuracy[k] = static_cast<double>(res.attribution[k * K + k]) / static_cast<double>(row_total[k]);
    res.target_loss[k] = loss_sum[k] / static_cast<double>(row_total[k]);
  }
  return res;
}

SiaRoundResult sia_round(std::span<const nn::ModelParams> client_models, const TargetSet& targets,
                         TieBreak tie_break, Rng* rng) {
  std::vector<std::vector<double>> losses(client_models.size());
  if (!targets.records.empty()) {
    const nn::Batch all = targets.as_batch();
    for (std::size_t k = 0; k < client_models.size(); ++k)
      losses[k] = nn::per_example_loss(client_models[k], all);
  }
  return attribute(losses, targets, tie_break, rng);
}

}  // namespace finp::attack
