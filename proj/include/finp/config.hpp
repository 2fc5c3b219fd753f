#pragma once

// Experiment configuration: a flat `key = value` text file, '#' starts a
// comment. Every key is optional and unknown keys are rejected.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "finp/attack.hpp"
#include "finp/client.hpp"
#include "finp/nncore.hpp"

namespace finp {

enum class Strategy { fedavg, finp_client_only, finp_server_pca, finp_server_ala, finp_full_pca, finp_full_ala };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

enum class Aggregator { fedavg, pca, ala };
Aggregator aggregator_of(Strategy s);
bool uses_client_regularizer(Strategy s);
bool needs_rho(Strategy s);

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int rounds = 20;
  std::size_t clients = 10;
  Strategy strategy = Strategy::fedavg;

  // local training
  double beta = 0.1;
  int local_epochs = 1;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  client::Optimizer optimizer = client::Optimizer::adam;
  int power_iters = 5;
  std::size_t probe_rows = 128;

  // data
  std::string dataset = "synthetic";  // synthetic | csv
  std::string csv_dir;                // csv: client_<k>.csv per client
  std::string partition = "dirichlet";  // dirichlet | iid
  double alpha = 0.5;
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t n_per_class = 200;
  double separation = 2.0;
  double test_fraction = 0.3;

  // model
  std::vector<std::size_t> hidden{64};
  nn::Activation activation = nn::Activation::relu;

  // attack
  std::size_t n_per_client = 50;
  attack::TieBreak tie_break = attack::TieBreak::lowest_id;

  // curvature
  std::size_t curvature_subsample = 256;
  int curvature_iters = 20;
  double curvature_tol = 1e-4;
  int curvature_probes = 100;
  bool curvature_always = false;

  // reporting and execution
  double convergence_delta = 0.01;
  int workers = 1;
  bool checkpoints = false;

  // test hooks
  bool force_uniform_weights = false;
  bool force_equal_rho = false;

  void validate() const;
  client::ClientConfig client_config() const;
  // Canonical `key = value` listing of every field.
  std::string to_text() const;
};

ExperimentConfig parse_config(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace finp
