#include "finp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "finp/checkpoint.hpp"
#include "finp/client.hpp"
#include "finp/curvature.hpp"
#include "finp/error.hpp"
#include "finp/server.hpp"

namespace finp {

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) {
          failed_at = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct ClientData {
  std::vector<nn::Batch> shards;
  nn::Batch train_all;
  nn::Batch test;
  data::Partition partition;
  std::size_t dim = 0;
  std::size_t classes = 0;
};

nn::Batch concat(const std::vector<nn::Batch>& parts, std::size_t dim) {
  nn::Batch out;
  out.dim = dim;
  for (const auto& b : parts) {
    out.inputs.insert(out.inputs.end(), b.inputs.begin(), b.inputs.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  }
  return out;
}

ClientData load_synthetic(const ExperimentConfig& cfg) {
  Rng gen = substream(cfg.seed, Stream::data_gen);
  const auto ds = data::synth_gaussian_mixture(cfg.classes, cfg.dim, cfg.n_per_class, cfg.separation, gen);
  Rng split_rng = substream(cfg.seed, Stream::split);
  const auto split = data::train_test_split(ds, cfg.test_fraction, split_rng);
  Rng part_rng = substream(cfg.seed, Stream::partition);
  ClientData cd;
  cd.partition = cfg.partition == "iid" ? data::iid_partition(split.train, cfg.clients, part_rng)
                                        : data::dirichlet_partition(split.train, cfg.clients, cfg.alpha, part_rng,
                                                                   std::max<std::size_t>(cfg.n_per_client, 1));
  for (const auto& idx : cd.partition.shards) cd.shards.push_back(split.train.batch(idx));
  cd.train_all = split.train.batch();
  cd.test = split.test.batch();
  cd.dim = ds.dim;
  cd.classes = ds.class_count;
  return cd;
}

// One CSV per client; each file is split into train and test locally.
ClientData load_client_csvs(const ExperimentConfig& cfg) {
  ClientData cd;
  std::vector<nn::Batch> tests;
  for (std::size_t k = 0; k < cfg.clients; ++k) {
    const auto path = std::filesystem::path(cfg.csv_dir) / ("client_" + std::to_string(k) + ".csv");
    const auto ds = data::load_csv(path, cfg.classes);
    if (k == 0) cd.dim = ds.dim;
    if (ds.dim != cd.dim) fail(ErrorKind::data, path.string() + ": feature width differs from client_0.csv");
    Rng split_rng = substream(cfg.seed, Stream::split, k);
    // Split a dataset of row indices so the manifest can name the training rows.
    data::Dataset ids;
    ids.dim = 1;
    ids.class_count = 1;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      ids.features.push_back(static_cast<double>(i));
      ids.labels.push_back(0);
    }
    const auto split = data::train_test_split(ids, cfg.test_fraction, split_rng);
    std::vector<std::size_t> tr, te;
    for (double v : split.train.features) tr.push_back(static_cast<std::size_t>(v));
    for (double v : split.test.features) te.push_back(static_cast<std::size_t>(v));
    cd.partition.shards.push_back(tr);
    cd.shards.push_back(ds.batch(tr));
    tests.push_back(ds.batch(te));
  }
  cd.classes = cfg.classes;
  cd.train_all = concat(cd.shards, cd.dim);
  cd.test = concat(tests, cd.dim);
  return cd;
}

std::vector<double> difference(const nn::ModelParams& a, const nn::ModelParams& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.flat()[i] - b.flat()[i];
  return d;
}

// Ranks over the clients whose curvature is finite; the rest get rho = 1.
std::vector<double> robust_ranks(const std::vector<double>& lambda, const std::vector<double>& trace) {
  const std::size_t K = lambda.size();
  std::vector<double> rho(K, 1.0);
  std::vector<std::size_t> ok;
  for (std::size_t k = 0; k < K; ++k)
    if (std::isfinite(lambda[k]) && std::isfinite(trace[k])) ok.push_back(k);
  if (ok.size() < 2) {
    for (auto k : ok) rho[k] = 0.0;
    return rho;
  }
  std::vector<double> l, t;
  for (auto k : ok) {
    l.push_back(lambda[k]);
    t.push_back(trace[k]);
  }
  const auto r = curvature::overfitting_ranks(l, t);
  for (std::size_t i = 0; i < ok.size(); ++i) rho[ok[i]] = r.rho[i];
  return rho;
}

std::string round_dir_name(int r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "round_%03d", r);
  return buf;
}

std::string client_file_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "client_%02zu.ckpt", k);
  return buf;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opt) {
  cfg.validate();
  RunResult res;
  res.config = cfg;
  const std::size_t K = cfg.clients;
  const auto ccfg = cfg.client_config();
  const Aggregator agg = aggregator_of(cfg.strategy);
  const bool want_curvature = needs_rho(cfg.strategy) || cfg.curvature_always;

  if (cfg.beta != 0.0 && !uses_client_regularizer(cfg.strategy))
    res.warnings.push_back("beta is ignored under strategy " + std::string(strategy_name(cfg.strategy)));

  ClientData cd = cfg.dataset == "csv" ? load_client_csvs(cfg) : load_synthetic(cfg);
  res.partition = cd.partition;

  Rng target_rng = substream(cfg.seed, Stream::targets);
  res.targets = attack::select_targets(cd.shards, cfg.n_per_client, target_rng);
  const nn::Batch target_batch = res.targets.as_batch();

  nn::Architecture arch;
  arch.layer_sizes.push_back(cd.dim);
  for (auto h : cfg.hidden) arch.layer_sizes.push_back(h);
  arch.layer_sizes.push_back(cd.classes);
  arch.activation = cfg.activation;
  arch.validate();

  Rng init_rng = substream(cfg.seed, Stream::init);
  nn::ModelParams global = quantize_f32(nn::init_model(arch, init_rng));

  std::vector<std::size_t> sizes(K);
  for (std::size_t k = 0; k < K; ++k) sizes[k] = cd.shards[k].size();

  curvature::Options copt;
  copt.power_iters = cfg.curvature_iters;
  copt.tol = cfg.curvature_tol;
  copt.probes = cfg.curvature_probes;
  copt.subsample = cfg.curvature_subsample;

  std::vector<double> rho_feedback(K, 0.0);

  for (int r = 1; r <= cfg.rounds; ++r) {
    RoundRecord rec;
    rec.round = r;
    const auto ur = static_cast<std::uint64_t>(r);

    // Local training from the broadcast model.
    std::vector<nn::ModelParams> uploads(K);
    std::vector<client::TrainStats> stats(K);
    auto t0 = Clock::now();
    parallel_for(K, cfg.workers, [&](std::size_t k) {
      client::ClientState st;
      st.id = static_cast<int>(k);
      st.shard = &cd.shards[k];
      st.model = global;
      st.rho = rho_feedback[k];
      client::TrainStreams streams{substream(cfg.seed, Stream::shuffle, k, ur),
                                   substream(cfg.seed, Stream::penalty, k, ur),
                                   substream(cfg.seed, Stream::probe_penalty, k, ur)};
      stats[k] = client::local_train(st, ccfg, streams);
      uploads[k] = quantize_f32(st.model);
    });
    rec.timings.train = seconds_since(t0);

    for (std::size_t k = 0; k < K; ++k) {
      rec.train_loss.push_back(stats[k].epoch_base.empty() ? kNaN : stats[k].epoch_base.back());
      rec.penalty.push_back(stats[k].final_penalty);
      rec.diverged.push_back(stats[k].diverged ? 1 : 0);
    }

    if (opt.checkpoint_dir) {
      const auto dir = *opt.checkpoint_dir / round_dir_name(r);
      std::filesystem::create_directories(dir);
      for (std::size_t k = 0; k < K; ++k)
        save_checkpoint(dir / client_file_name(k), uploads[k],
                        {cfg.seed, r, static_cast<std::int64_t>(k)});
    }

    // Source inference on exactly the models the server received.
    t0 = Clock::now();
    SiaRecord sia;
    sia.round = r;
    for (const auto& m : uploads) sia.model_hash.push_back(wire_hash(m));
    {
      std::vector<std::vector<double>> losses(K);
      if (target_batch.size() > 0)
        parallel_for(K, cfg.workers, [&](std::size_t k) { losses[k] = nn::per_example_loss(uploads[k], target_batch); });
      Rng tie_rng = substream(cfg.seed, Stream::tie_break, 0, ur);
      sia.result = attack::attribute(losses, res.targets, cfg.tie_break, &tie_rng);
    }
    rec.sia_acc = sia.result.accuracy;
    rec.target_loss = sia.result.target_loss;
    rec.timings.sia = seconds_since(t0);

    // Curvature and overfitting ranks.
    rec.rho.assign(K, kNaN);
    rec.lambda_max.assign(K, kNaN);
    rec.trace.assign(K, kNaN);
    if (want_curvature) {
      t0 = Clock::now();
      parallel_for(K, cfg.workers, [&](std::size_t k) {
        Rng crng = substream(cfg.seed, Stream::curvature, k, ur);
        try {
          const auto c = curvature::estimate_client(uploads[k], cd.shards[k], copt, crng);
          rec.lambda_max[k] = c.lambda_max;
          rec.trace[k] = c.trace;
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::numeric) throw;
        }
      });
      rec.rho = robust_ranks(rec.lambda_max, rec.trace);
      if (cfg.force_equal_rho) std::fill(rec.rho.begin(), rec.rho.end(), 0.0);
      rec.timings.curvature = seconds_since(t0);
    }

    // Aggregation.
    auto pca_weights = [&] {
      std::vector<std::vector<double>> updates;
      updates.reserve(K);
      for (const auto& m : uploads) updates.push_back(difference(m, global));
      const auto pd = server::pca_distances(updates);
      rec.p = pd.p;
      rec.pca_components = pd.components;
      return server::adaptive_weights(pd.p);
    };
    t0 = Clock::now();
    std::optional<server::AggregationWeights> w;
    switch (agg) {
      case Aggregator::fedavg: w = server::fedavg_weights(sizes); break;
      case Aggregator::pca: w = pca_weights(); break;
      case Aggregator::ala: {
        auto a = server::ala_weights(rec.rho);
        rec.ala_fallback = a.fallback;
        w = a.weights;
        break;
      }
    }
    if (cfg.force_uniform_weights) w = server::AggregationWeights::uniform(K);
    nn::ModelParams next = server::weighted_average(uploads, *w);
    rec.timings.aggregation = seconds_since(t0);
    // Risk proxy reported for every strategy; only timed when it drives the weights.
    if (agg != Aggregator::pca) pca_weights();
    rec.objective = server::finp_server_objective(rec.p);
    rec.weights.assign(w->values().begin(), w->values().end());

    quantize_f32_inplace(next);
    global = std::move(next);
    rec.global_hash = wire_hash(global);
    if (opt.checkpoint_dir)
      save_checkpoint(*opt.checkpoint_dir / round_dir_name(r) / "global.ckpt", global, {cfg.seed, r, -1});

    rec.metrics = metrics::make_row(r, rec.sia_acc, rec.target_loss, nn::accuracy(global, cd.train_all),
                                    nn::accuracy(global, cd.test));
    if (want_curvature) rho_feedback = rec.rho;
    if (std::find(rec.diverged.begin(), rec.diverged.end(), 1) != rec.diverged.end())
      res.warnings.push_back("round " + std::to_string(r) + ": a client diverged");

    if (opt.on_round) opt.on_round(rec);
    res.global_models.push_back(global);
    res.records.push_back(std::move(rec));
    res.sia.push_back(std::move(sia));
  }

  res.summary = summarize(res.records, cfg.convergence_delta);
  return res;
}

std::vector<SiaRecord> replay_attack(const std::filesystem::path& checkpoint_dir,
                                     const TargetManifest& manifest) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(checkpoint_dir)) fail(ErrorKind::io, "not a directory: " + checkpoint_dir.string());
  std::vector<std::pair<int, fs::path>> rounds;
  for (const auto& entry : fs::directory_iterator(checkpoint_dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory() || name.rfind("round_", 0) != 0) continue;
    int r = 0;
    try {
      r = std::stoi(name.substr(6));
    } catch (const std::exception&) {
      continue;
    }
    rounds.emplace_back(r, entry.path());
  }
  if (rounds.empty()) fail(ErrorKind::io, "no round_NNN directories in " + checkpoint_dir.string());
  std::sort(rounds.begin(), rounds.end());

  const std::size_t K = manifest.targets.clients;
  const nn::Batch batch = manifest.targets.as_batch();
  std::vector<SiaRecord> out;
  for (const auto& [r, dir] : rounds) {
    SiaRecord rec;
    rec.round = r;
    std::vector<std::vector<double>> losses(K);
    for (std::size_t k = 0; k < K; ++k) {
      const auto path = dir / client_file_name(k);
      if (!fs::exists(path)) fail(ErrorKind::io, "missing checkpoint " + path.string());
      const auto ck = load_checkpoint(path);
      rec.model_hash.push_back(wire_hash(ck.model));
      if (batch.size() > 0) losses[k] = nn::per_example_loss(ck.model, batch);
    }
    Rng tie_rng = substream(manifest.seed, Stream::tie_break, 0, static_cast<std::uint64_t>(r));
    rec.result = attack::attribute(losses, manifest.targets, manifest.tie_break, &tie_rng);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace finp
