#pragma once

// Local training on  CE + beta * rho * |J|, with |J| the input-Jacobian
// spectral norm estimated per minibatch and differentiated with the power
// iteration direction held fixed.

#include <cstddef>
#include <string_view>
#include <vector>

#include "finp/nncore.hpp"
#include "finp/rng.hpp"

namespace finp::client {

enum class Optimizer { adam, sgd };

std::string_view optimizer_name(Optimizer o);
Optimizer parse_optimizer(std::string_view name);

struct ClientConfig {
  double beta = 0.0;
  int local_epochs = 1;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  int power_iters = 5;
  Optimizer optimizer = Optimizer::adam;
  // Rows used for the end-of-training |J| probe (0: whole shard).
  std::size_t probe_rows = 128;

  void validate() const;
};

struct ClientState {
  int id = 0;
  const nn::Batch* shard = nullptr;
  nn::ModelParams model;
  double rho = 0.0;
  nn::AdamState optimizer;
  double last_train_loss = 0.0;
  double last_penalty = 0.0;
};

struct TrainStats {
  std::vector<double> epoch_total;    // mean regularized loss per epoch
  std::vector<double> epoch_base;     // mean CE per epoch
  std::vector<double> epoch_penalty;  // mean |J| per epoch (0 when the regularizer is off)
  double initial_loss = 0.0;          // regularized loss of the first minibatch, pre-update
  double final_penalty = 0.0;         // |J| of the trained model on the probe rows
  bool diverged = false;
  int epochs_run = 0;
};

struct TrainStreams {
  Rng shuffle;
  Rng penalty;
  Rng probe;
};

// Mean loss above this multiple of the initial loss counts as divergence.
inline constexpr double kDivergenceFactor = 10.0;

// Value of the regularized objective on one batch; no gradient.
nn::RegularizedLoss regularized_loss(const nn::ModelParams& model, const nn::Batch& batch,
                                     double rho, double beta, int power_iters, Rng& rng);

TrainStats local_train(ClientState& state, const ClientConfig& cfg, TrainStreams& streams);

}  // namespace finp::client
