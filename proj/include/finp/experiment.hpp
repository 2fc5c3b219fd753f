#pragma once

// Round loop: broadcast, local training, source inference on the uploaded
// models, curvature ranks, aggregation, metrics. Output files:
//
//   rounds.csv       one row per round, columns in kRoundsHeader order
//                    followed by per-client groups (see rounds_header)
//   sia.csv          one row per (round, client): attack result
//   summary.json     final and across-round metrics
//   timings.csv      wall-clock seconds per phase (not deterministic)
//   partition.json   shard membership
//   targets.json     attack targets, seed and tie-break rule
//   config.resolved  every config key with its effective value
//   checkpoints/     round_NNN/client_KK.ckpt and global.ckpt (optional)

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "finp/attack.hpp"
#include "finp/config.hpp"
#include "finp/data.hpp"
#include "finp/metrics.hpp"
#include "finp/nncore.hpp"

namespace finp {

struct PhaseTimings {
  double train = 0.0;
  double sia = 0.0;
  double curvature = 0.0;
  double aggregation = 0.0;
};

struct RoundRecord {
  int round = 0;
  // Per client, length K. NaN marks a value that was not computed.
  std::vector<double> rho;
  std::vector<double> lambda_max;
  std::vector<double> trace;
  std::vector<double> p;
  std::vector<double> weights;
  std::vector<double> sia_acc;
  std::vector<double> target_loss;
  std::vector<double> train_loss;
  std::vector<double> penalty;
  std::vector<int> diverged;

  std::optional<double> objective;
  std::size_t pca_components = 0;
  bool ala_fallback = false;
  std::uint64_t global_hash = 0;
  metrics::MetricsRow metrics;
  PhaseTimings timings;
};

// SIA outcome of one round plus the wire hash of each attacked model.
struct SiaRecord {
  int round = 0;
  attack::SiaRoundResult result;
  std::vector<std::uint64_t> model_hash;
};

struct MetricSummary {
  std::optional<double> final_round;
  std::optional<double> round_mean;
};

struct Summary {
  int rounds = 0;
  std::size_t clients = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  std::optional<double> mean_sia;  // across all clients and rounds
  std::optional<double> max_sia;
  MetricSummary cov_sia, fi_sia, cov_loss, fi_loss, eod;
  metrics::Convergence convergence;
  bool diverged = false;
  std::vector<int> diverged_rounds;
  bool converged = false;  // a convergence round exists and no client diverged
  std::vector<int> ala_fallback_rounds;
};

Summary summarize(const std::vector<RoundRecord>& records, double convergence_delta);
std::string summary_json(const Summary& s);

struct RunOptions {
  std::optional<std::filesystem::path> checkpoint_dir;
  std::function<void(const RoundRecord&)> on_round;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<RoundRecord> records;
  std::vector<SiaRecord> sia;
  Summary summary;
  data::Partition partition;
  attack::TargetSet targets;
  std::vector<nn::ModelParams> global_models;  // after each round's aggregation
  std::vector<std::string> warnings;
};

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {});

std::string rounds_csv(const std::vector<RoundRecord>& records);
std::string sia_csv(const std::vector<SiaRecord>& sia);
std::string timings_csv(const std::vector<RoundRecord>& records);

struct TargetManifest {
  attack::TargetSet targets;
  std::uint64_t seed = 0;
  attack::TieBreak tie_break = attack::TieBreak::lowest_id;
};

void write_targets_manifest(const std::filesystem::path& path, const TargetManifest& m);
TargetManifest read_targets_manifest(const std::filesystem::path& path);

// Writes every output file except checkpoints, creating out_dir if needed.
void emit_report(const RunResult& result, const std::filesystem::path& out_dir);

// Recomputes the attack from saved client checkpoints.
std::vector<SiaRecord> replay_attack(const std::filesystem::path& checkpoint_dir,
                                     const TargetManifest& manifest);

// Parses rounds.csv back into records (timings are left zero).
std::vector<RoundRecord> parse_rounds_csv(const std::string& text);
// Rebuilds summary.json in dir from rounds.csv and config.resolved; returns it.
std::string rerender_summary(const std::filesystem::path& dir);

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// (lowest i) is rethrown after all workers finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

std::string format_double(double x);

}  // namespace finp
