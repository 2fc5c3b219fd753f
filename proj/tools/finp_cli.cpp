// finp: run a federated experiment, replay the source-inference attack from
// checkpoints, or re-render a summary from a run directory.
//
// Environment: FINP_SEED and FINP_OUT_DIR stand in for --seed and --out.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "finp/error.hpp"
#include "finp/experiment.hpp"

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

std::uint64_t parse_seed(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  finp::fail(finp::ErrorKind::usage, "invalid seed '" + s + "'");
}

std::string require_out(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (auto e = env("FINP_OUT_DIR")) return *e;
  finp::fail(finp::ErrorKind::usage, "--out is required (or set FINP_OUT_DIR)");
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f || !(f << text)) finp::fail(finp::ErrorKind::io, "cannot write " + p.string());
}

int run(const std::string& config_path, const std::string& out_flag, const std::string& seed_flag, int workers,
        bool quiet) {
  auto cfg = finp::load_config(config_path);
  if (!seed_flag.empty()) cfg.seed = parse_seed(seed_flag);
  else if (auto e = env("FINP_SEED")) cfg.seed = parse_seed(*e);
  if (workers > 0) cfg.workers = workers;
  cfg.validate();
  const std::filesystem::path out = require_out(out_flag);
  std::filesystem::create_directories(out);

  finp::RunOptions opt;
  if (cfg.checkpoints) opt.checkpoint_dir = out / "checkpoints";
  if (!quiet)
    opt.on_round = [](const finp::RoundRecord& r) {
      std::cerr << "round " << r.round << "  test_acc " << finp::format_double(r.metrics.test_acc) << "  mean_sia "
                << finp::format_double(r.metrics.mean_sia) << '\n';
    };
  const auto result = finp::run_experiment(cfg, opt);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  finp::emit_report(result, out);
  std::cout << finp::summary_json(result.summary);
  return 0;
}

int replay(const std::string& ckpt_dir, const std::string& targets, const std::string& out_flag) {
  const std::filesystem::path out = require_out(out_flag);
  const auto manifest = finp::read_targets_manifest(targets);
  const auto sia = finp::replay_attack(ckpt_dir, manifest);
  std::filesystem::create_directories(out);
  write_text(out / "sia.csv", finp::sia_csv(sia));
  std::cout << "replayed " << sia.size() << " round(s) into " << (out / "sia.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fairness-aware federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seed, ckpt_dir, targets, in_dir;
  int workers = 0;
  bool quiet = false;

  auto* run_cmd = app.add_subcommand("run", "Run an experiment");
  run_cmd->add_option("--config", config_path, "Config file (key = value)")->required();
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--seed", seed, "Override the config seed");
  run_cmd->add_option("--workers", workers, "Worker threads");
  run_cmd->add_flag("--quiet", quiet, "No per-round progress");

  auto* replay_cmd = app.add_subcommand("attack-replay", "Recompute the attack from checkpoints");
  replay_cmd->add_option("--checkpoints", ckpt_dir, "Checkpoint directory")->required();
  replay_cmd->add_option("--targets", targets, "Target manifest (targets.json)")->required();
  replay_cmd->add_option("--out", out_dir, "Output directory");

  auto* report_cmd = app.add_subcommand("report", "Re-render summary.json from rounds.csv");
  report_cmd->add_option("--in", in_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : finp::exit_code(finp::ErrorKind::usage);
  }

  try {
    if (*run_cmd) return run(config_path, out_dir, seed, workers, quiet);
    if (*replay_cmd) return replay(ckpt_dir, targets, out_dir);
    if (*report_cmd) {
      std::cout << finp::rerender_summary(in_dir);
      return 0;
    }
  } catch (const finp::Error& e) {
    std::cerr << "error[" << finp::error_kind_name(e.kind()) << "]: " << e.what() << '\n';
    return finp::exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error[io]: " << e.what() << '\n';
    return finp::exit_code(finp::ErrorKind::io);
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
