#include "finp/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "finp/error.hpp"

namespace finp::client {

std::string_view optimizer_name(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(std::string_view name) {
  if (name == "adam") return Optimizer::adam;
  if (name == "sgd") return Optimizer::sgd;
  fail(ErrorKind::config, "unknown optimizer '" + std::string(name) + "'");
}

void ClientConfig::validate() const {
  if (!(beta >= 0.0)) fail(ErrorKind::config, "beta must be >= 0");
  if (local_epochs < 1) fail(ErrorKind::config, "local_epochs must be >= 1");
  if (batch_size < 1) fail(ErrorKind::config, "batch_size must be >= 1");
  if (!(lr >= 0.0)) fail(ErrorKind::config, "lr must be >= 0");
  if (power_iters < 1) fail(ErrorKind::config, "power_iters must be >= 1");
}

nn::RegularizedLoss regularized_loss(const nn::ModelParams& model, const nn::Batch& batch,
                                     double rho, double beta, int power_iters, Rng& rng) {
  if (!(rho >= 0.0 && rho <= 1.0)) fail(ErrorKind::data, "rho must lie in [0, 1]");
  if (!(beta >= 0.0)) fail(ErrorKind::config, "beta must be >= 0");
  nn::RegularizedLoss out;
  out.base = nn::loss(model, batch);
  out.penalty = nn::estimate_input_jacobian_norm(model, batch, power_iters, rng).mean_sigma;
  out.total = out.base + beta * rho * out.penalty;
  return out;
}

namespace {

nn::Batch gather(const nn::Batch& src, std::span<const std::size_t> idx) {
  nn::Batch b;
  b.dim = src.dim;
  b.inputs.reserve(idx.size() * src.dim);
  b.labels.reserve(idx.size());
  for (auto i : idx) {
    auto row = src.row(i);
    b.inputs.insert(b.inputs.end(), row.begin(), row.end());
    b.labels.push_back(src.labels[i]);
  }
  return b;
}

}  // namespace

TrainStats local_train(ClientState& state, const ClientConfig& cfg, TrainStreams& streams) {
  cfg.validate();
  if (state.shard == nullptr || state.shard->size() == 0)
    fail(ErrorKind::data, "client " + std::to_string(state.id) + " has an empty shard");
  if (!(state.rho >= 0.0 && state.rho <= 1.0)) fail(ErrorKind::data, "rho must lie in [0, 1]");

  const nn::Batch& shard = *state.shard;
  const double weight = cfg.beta * state.rho;
  const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> g(state.model.size());

  TrainStats stats;
  bool have_initial = false;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const nn::ModelParams snapshot = state.model;
    const nn::AdamState opt_snapshot = state.optimizer;
    std::shuffle(order.begin(), order.end(), streams.shuffle);
    double sum_total = 0.0, sum_base = 0.0, sum_pen = 0.0;
    std::size_t batches = 0;
    bool numeric_failure = false;
    try {
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const nn::Batch batch =
            gather(shard, std::span<const std::size_t>(order).subspan(start, end - start));
        nn::RegularizedLoss l;
        if (weight > 0.0) {
          auto est = nn::estimate_input_jacobian_norm(state.model, batch, cfg.power_iters,
                                                      streams.penalty);
          l = nn::regularized_loss_and_grad(state.model, batch, weight, est.directions, g);
        } else {
          l = nn::regularized_loss_and_grad(state.model, batch, 0.0, {}, g);
        }
        if (!have_initial) {
          stats.initial_loss = l.total;
          have_initial = true;
        }
        sum_total += l.total;
        sum_base += l.base;
        sum_pen += l.penalty;
        ++batches;
        if (cfg.optimizer == Optimizer::adam)
          nn::adam_step(state.model, g, state.optimizer, adam);
        else
          nn::sgd_step(state.model, g, cfg.lr);
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::numeric) throw;
      numeric_failure = true;
    }
    const double n = static_cast<double>(std::max<std::size_t>(batches, 1));
    const double mean_total = sum_total / n;
    stats.epoch_total.push_back(mean_total);
    stats.epoch_base.push_back(sum_base / n);
    stats.epoch_penalty.push_back(sum_pen / n);
    stats.epochs_run = epoch + 1;
    const double threshold = kDivergenceFactor * std::max(stats.initial_loss, 1e-3);
    if (numeric_failure || !std::isfinite(mean_total) || mean_total > threshold) {
      // Halt and keep the last finite parameters.
      stats.diverged = true;
      state.model = snapshot;
      state.optimizer = opt_snapshot;
      break;
    }
  }

  const std::size_t probe_n =
      cfg.probe_rows == 0 ? shard.size() : std::min(cfg.probe_rows, shard.size());
  std::vector<std::size_t> probe_idx(probe_n);
  std::iota(probe_idx.begin(), probe_idx.end(), 0);
  const nn::Batch probe = gather(shard, probe_idx);
  stats.final_penalty =
      nn::estimate_input_jacobian_norm(state.model, probe, cfg.power_iters, streams.probe)
          .mean_sigma;
  state.last_train_loss = stats.epoch_base.back();
  state.last_penalty = stats.final_penalty;
  return stats;
}

}  // namespace finp::client
