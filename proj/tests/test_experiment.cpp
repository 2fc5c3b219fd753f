#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "finp/checkpoint.hpp"
#include "finp/error.hpp"
#include "finp/experiment.hpp"

using namespace finp;
namespace fs = std::filesystem;

namespace {

const fs::path kData = FINP_TEST_DATA_DIR;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("finp_exp_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny(const std::string& extra = "") {
  return parse_config(
      "seed = 5\n"
      "rounds = 2\n"
      "clients = 3\n"
      "classes = 3\n"
      "dim = 6\n"
      "n_per_class = 40\n"
      "hidden = 8\n"
      "n_per_client = 5\n"
      "batch_size = 16\n"
      "lr = 0.01\n"
      "curvature_iters = 5\n"
      "curvature_probes = 4\n"
      "curvature_subsample = 32\n" +
      extra);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FINP_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("fedavg smoke run weights clients by shard size") {
  auto cfg = tiny("clients = 2\nrounds = 1\nbeta = 0.3\n");
  const auto res = run_experiment(cfg);
  REQUIRE(res.records.size() == 1);
  const auto& r = res.records[0];
  const double n0 = res.partition.shards[0].size(), n1 = res.partition.shards[1].size();
  CHECK(r.weights[0] == doctest::Approx(n0 / (n0 + n1)).epsilon(1e-15));
  CHECK(r.weights[1] == doctest::Approx(n1 / (n0 + n1)).epsilon(1e-15));
  CHECK(std::isnan(r.rho[0]));  // no curvature under plain fedavg
  REQUIRE_FALSE(res.warnings.empty());
  CHECK(res.warnings[0].find("beta") != std::string::npos);
  CHECK(r.sia_acc.size() == 2);
  CHECK(r.p.size() == 2);
}

TEST_CASE("zero beta with uniform weights reduces full PCA to fedavg") {
  const std::string common = "partition = iid\nn_per_class = 40\nclients = 4\nrounds = 3\ncurvature_always = true\n";
  const auto base = run_experiment(tiny(common + "strategy = fedavg\n"));
  const auto pca = run_experiment(tiny(common + "strategy = finp_full_pca\nbeta = 0\nforce_uniform_weights = true\n"));
  CHECK(base.global_models == pca.global_models);
  CHECK(rounds_csv(base.records) == rounds_csv(pca.records));
  CHECK(sia_csv(base.sia) == sia_csv(pca.sia));
  CHECK(summary_json(base.summary) == summary_json(pca.summary));
}

TEST_CASE("ALA with forced equal ranks reproduces unweighted fedavg") {
  const std::string common = "partition = iid\nn_per_class = 40\nclients = 4\nrounds = 2\n";
  const auto base = run_experiment(tiny(common + "strategy = fedavg\n"));
  const auto ala = run_experiment(tiny(common + "strategy = finp_server_ala\nforce_equal_rho = true\n"));
  CHECK(base.global_models == ala.global_models);
  for (const auto& r : ala.records)
    for (double w : r.weights) CHECK(w == 0.25);
}

TEST_CASE("outputs do not depend on the worker count") {
  auto cfg = tiny("strategy = finp_full_ala\nbeta = 0.2\nrounds = 3\n");
  const auto a = scratch("w1"), b = scratch("w4");
  cfg.workers = 1;
  emit_report(run_experiment(cfg), a);
  cfg.workers = 4;
  emit_report(run_experiment(cfg), b);
  for (const char* f : {"rounds.csv", "sia.csv", "summary.json", "partition.json", "targets.json"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "config.resolved") == slurp(b / "config.resolved"));
}

TEST_CASE("attack replay from checkpoints matches the in-run attack") {
  const auto out = scratch("replay");
  auto cfg = tiny("strategy = finp_server_pca\nrounds = 3\ntie_break = random\n");
  RunOptions opt;
  opt.checkpoint_dir = out / "checkpoints";
  const auto res = run_experiment(cfg, opt);
  emit_report(res, out);

  const auto manifest = read_targets_manifest(out / "targets.json");
  const auto replayed = replay_attack(out / "checkpoints", manifest);
  CHECK(sia_csv(replayed) == slurp(out / "sia.csv"));

  // The attacked models are exactly the uploaded client checkpoints.
  for (const auto& s : res.sia)
    for (std::size_t k = 0; k < s.model_hash.size(); ++k) {
      char name[64];
      std::snprintf(name, sizeof name, "round_%03d/client_%02zu.ckpt", s.round, k);
      CHECK(wire_hash(load_checkpoint(out / "checkpoints" / name).model) == s.model_hash[k]);
    }
  // Global checkpoints carry the aggregated model.
  CHECK(load_checkpoint(out / "checkpoints/round_003/global.ckpt").model == res.global_models.back());

  const auto one = scratch("replay_one");
  fs::create_directories(one);
  fs::copy(out / "checkpoints/round_002", one / "round_002");
  const auto single = replay_attack(one, manifest);
  REQUIRE(single.size() == 1);
  CHECK(single[0].round == 2);
  CHECK(single[0].result.attribution == res.sia[1].result.attribution);

  const auto empty = scratch("replay_empty");
  fs::create_directories(empty);
  CHECK_THROWS_AS(replay_attack(empty, manifest), Error);
  fs::remove(one / "round_002/client_01.ckpt");
  CHECK_THROWS_AS(replay_attack(one, manifest), Error);
}

TEST_CASE("report re-renders the summary from rounds.csv") {
  const auto out = scratch("report");
  const auto res = run_experiment(tiny("strategy = finp_full_pca\nbeta = 0.1\n"));
  emit_report(res, out);
  const auto before = slurp(out / "summary.json");
  fs::remove(out / "summary.json");
  CHECK(rerender_summary(out) == before);
  CHECK(slurp(out / "summary.json") == before);
  const auto parsed = parse_rounds_csv(slurp(out / "rounds.csv"));
  CHECK(rounds_csv(parsed) == slurp(out / "rounds.csv"));
}

TEST_CASE("emit_report creates the directory and overwrites deterministically") {
  const auto out = scratch("overwrite") / "nested" / "dir";
  const auto res = run_experiment(tiny());
  emit_report(res, out);
  const auto first = slurp(out / "rounds.csv");
  emit_report(run_experiment(tiny()), out);
  CHECK(slurp(out / "rounds.csv") == first);
  for (const char* f : {"rounds.csv", "sia.csv", "summary.json", "timings.csv", "partition.json", "targets.json",
                        "config.resolved"})
    CHECK(fs::exists(out / f));
}

TEST_CASE("divergence is flagged and reported as non-converged") {
  const auto res = run_experiment(
      tiny("strategy = finp_client_only\noptimizer = sgd\nlr = 0.05\nbeta = 1e4\nlocal_epochs = 3\n"
           "rounds = 3\ncurvature_always = true\n"));
  CHECK(res.summary.diverged);
  CHECK_FALSE(res.summary.converged);
  CHECK_FALSE(res.summary.diverged_rounds.empty());
  for (const auto& m : res.global_models) CHECK(m.all_finite());
}

TEST_CASE("per-client csv files drive the run") {
  const auto dir = scratch("csv");
  fs::create_directories(dir);
  for (std::size_t k = 0; k < 3; ++k) {
    Rng rng = substream(k + 1, Stream::data_gen);
    data::write_csv(dir / ("client_" + std::to_string(k) + ".csv"),
                    data::synth_gaussian_mixture(3, 5, 15 + 5 * k, 2.0, rng));
  }
  const auto res = run_experiment(tiny("dataset = csv\ncsv_dir = " + dir.string() + "\n"));
  CHECK(res.records.size() == 2);
  CHECK(res.partition.shards[0].size() == 31);  // 45 rows, 14 held out
  CHECK_THROWS_AS(run_experiment(tiny("dataset = csv\ncsv_dir = /nonexistent\n")), Error);
}

TEST_CASE("cli: exit codes and environment overrides") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "ok.cfg");
    f << tiny("partition = iid\n").to_text();
    std::ofstream g(dir / "bad.cfg");
    g << "rounds = 2\nmystery = 1\n";
  }
  const std::string cfg = (dir / "ok.cfg").string();
  CHECK(run_cli("run --config " + cfg + " --out " + (dir / "a").string()) == 0);
  CHECK(fs::exists(dir / "a/summary.json"));
  CHECK(run_cli("run --config " + (dir / "bad.cfg").string() + " --out " + (dir / "b").string()) == 3);
  CHECK(run_cli("run --config " + (dir / "missing.cfg").string() + " --out x") == 4);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("run --config " + cfg + " --out " + (dir / "c").string() + " --seed notanumber") == 2);

  const std::string env_cmd = "FINP_SEED=77 FINP_OUT_DIR=" + (dir / "env").string() + " " + FINP_CLI_PATH +
                              " run --quiet --config " + cfg + " >/dev/null 2>&1";
  REQUIRE(std::system(env_cmd.c_str()) == 0);
  CHECK(load_config(dir / "env/config.resolved").seed == 77);
  CHECK(run_cli("run --quiet --config " + cfg + " --seed 77 --out " + (dir / "flag").string()) == 0);
  CHECK(slurp(dir / "env/rounds.csv") == slurp(dir / "flag/rounds.csv"));

  CHECK(run_cli("report --in " + (dir / "a").string()) == 0);
  CHECK(run_cli("attack-replay --checkpoints " + (dir / "nope").string() + " --targets " +
                (dir / "a/targets.json").string() + " --out " + (dir / "r").string()) == 4);
}

// Byte comparison against checked-in outputs of a seeded 2-round run. Runs
// under FINP_ISA=scalar (see tests/CMakeLists.txt) so the fixture does not
// depend on the host's vector unit. FINP_UPDATE_GOLDEN=1 rewrites it.
TEST_CASE("golden: seeded two-round run") {
  const fs::path golden = kData / "golden";
  const auto cfg = load_config(golden / "run.cfg");
  const auto out = scratch("golden");
  emit_report(run_experiment(cfg), out);
  const char* files[] = {"rounds.csv", "sia.csv", "summary.json", "partition.json", "targets.json"};
  if (std::getenv("FINP_UPDATE_GOLDEN")) {
    for (const char* f : files) fs::copy_file(out / f, golden / f, fs::copy_options::overwrite_existing);
    MESSAGE("golden files rewritten");
    return;
  }
  for (const char* f : files) {
    CAPTURE(f);
    CHECK(slurp(out / f) == slurp(golden / f));
  }
}
