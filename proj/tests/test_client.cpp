#include <cmath>

#include "doctest.h"
#include "finp/client.hpp"
#include "finp/data.hpp"
#include "finp/error.hpp"
#include "support.hpp"

using namespace finp;
using namespace finp::client;

namespace {

nn::Batch separable_shard(std::uint64_t seed, std::size_t n_per_class = 100) {
  Rng rng = substream(seed, Stream::data_gen);
  return data::synth_gaussian_mixture(2, 4, n_per_class, 6.0, rng).batch();
}

TrainStreams streams(std::uint64_t seed, std::uint64_t client = 0) {
  return {substream(seed, Stream::shuffle, client, 1), substream(seed, Stream::penalty, client, 1),
          substream(seed, Stream::probe_penalty, client, 1)};
}

ClientState fresh(const nn::Batch& shard, std::uint64_t seed, double rho, std::vector<std::size_t> hidden = {8}) {
  nn::Architecture a;
  a.layer_sizes = {shard.dim};
  for (auto h : hidden) a.layer_sizes.push_back(h);
  a.layer_sizes.push_back(2);
  Rng rng = substream(seed, Stream::init);
  ClientState s;
  s.shard = &shard;
  s.model = nn::init_model(a, rng);
  s.rho = rho;
  return s;
}

}  // namespace

TEST_CASE("regularized loss composes base and penalty") {
  nn::ModelParams w(testing::arch({2, 2}), {3, 0, 0, 1, 0, 0});
  nn::Batch b;
  b.dim = 2;
  b.inputs = {1, 0, 0, 1};
  b.labels = {0, 1};
  Rng rng = substream(1, Stream::penalty);
  const auto r = regularized_loss(w, b, 0.5, 2.0, 30, rng);
  CHECK(r.penalty == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(r.total == doctest::Approx(r.base + 2.0 * 0.5 * 3.0).epsilon(1e-12));
  CHECK(r.base == doctest::Approx(nn::loss(w, b)).epsilon(1e-12));

  Rng r2 = substream(1, Stream::penalty);
  CHECK(regularized_loss(w, b, 0.9, 0.0, 30, r2).total == r.base);
  Rng r3 = substream(1, Stream::penalty);
  CHECK(regularized_loss(w, b, 0.0, 5.0, 30, r3).total == r.base);
}

TEST_CASE("separable shard is learned without the regularizer") {
  const auto shard = separable_shard(1);
  auto st = fresh(shard, 1, 0.0);
  ClientConfig cfg;
  cfg.local_epochs = 5;
  cfg.batch_size = 16;
  cfg.lr = 0.01;
  auto s = streams(1);
  const auto stats = local_train(st, cfg, s);
  CHECK_FALSE(stats.diverged);
  CHECK(stats.epochs_run == 5);
  CHECK(stats.epoch_base.size() == 5);
  CHECK(nn::accuracy(st.model, shard) >= 0.95);
  CHECK(stats.epoch_base.back() < stats.epoch_base.front());
}

TEST_CASE("zero learning rate leaves the model untouched") {
  const auto shard = separable_shard(2);
  for (auto opt : {Optimizer::adam, Optimizer::sgd}) {
    auto st = fresh(shard, 2, 0.5);
    const auto before = st.model;
    ClientConfig cfg;
    cfg.beta = 0.0;
    cfg.lr = 0.0;
    cfg.optimizer = opt;
    auto s = streams(2);
    local_train(st, cfg, s);
    CHECK(st.model == before);
  }
}

TEST_CASE("with beta = 0 rho has no effect on the trained model") {
  const auto shard = separable_shard(3);
  auto a = fresh(shard, 3, 0.0), b = fresh(shard, 3, 0.9);
  ClientConfig cfg;
  cfg.local_epochs = 2;
  auto sa = streams(3), sb = streams(3);
  local_train(a, cfg, sa);
  local_train(b, cfg, sb);
  CHECK(a.model == b.model);
}

TEST_CASE("extreme beta takes the divergence path without throwing") {
  const auto shard = separable_shard(4);
  auto st = fresh(shard, 4, 1.0);
  ClientConfig cfg;
  cfg.beta = 1e3;
  cfg.optimizer = Optimizer::sgd;
  cfg.lr = 0.05;
  cfg.local_epochs = 5;
  cfg.batch_size = 16;
  auto s = streams(4);
  TrainStats stats;
  CHECK_NOTHROW(stats = local_train(st, cfg, s));
  CHECK((stats.diverged || nn::accuracy(st.model, shard) <= 0.6));
  CHECK(st.model.all_finite());
}

TEST_CASE("larger beta does not raise the final Jacobian norm") {
  int monotone = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng = substream(seed, Stream::data_gen);
    const auto shard = data::synth_gaussian_mixture(2, 4, 100, 2.0, rng).batch();
    std::vector<double> finals;
    for (double beta : {0.0, 0.1, 1.0}) {
      auto st = fresh(shard, seed, 1.0, {16});
      ClientConfig cfg;
      cfg.beta = beta;
      cfg.local_epochs = 5;
      cfg.batch_size = 32;
      cfg.lr = 0.01;
      auto s = streams(seed);
      finals.push_back(local_train(st, cfg, s).final_penalty);
    }
    CAPTURE(seed);
    CAPTURE(finals[0]);
    CAPTURE(finals[1]);
    CAPTURE(finals[2]);
    if (finals[0] >= finals[1] && finals[1] >= finals[2]) ++monotone;
  }
  CHECK(monotone >= 4);
}

TEST_CASE("penalty decreases over epochs under regularization") {
  int down = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng = substream(seed, Stream::data_gen);
    const auto shard = data::synth_gaussian_mixture(2, 4, 100, 2.0, rng).batch();
    auto st = fresh(shard, seed, 1.0, {16});
    // Start from a steep model so the penalty has room to fall.
    for (auto& x : st.model.flat()) x *= 3.0;
    ClientConfig cfg;
    cfg.beta = 1.0;
    cfg.local_epochs = 6;
    cfg.batch_size = 32;
    cfg.lr = 0.01;
    auto s = streams(seed);
    const auto stats = local_train(st, cfg, s);
    for (double p : stats.epoch_penalty) CHECK(p >= 0.0);
    if (stats.epoch_penalty.back() <= stats.epoch_penalty.front()) ++down;
  }
  CHECK(down >= 4);
}

TEST_CASE("invalid client inputs are rejected") {
  const auto shard = separable_shard(5);
  auto st = fresh(shard, 5, 1.5);
  ClientConfig cfg;
  auto s = streams(5);
  CHECK_THROWS_AS(local_train(st, cfg, s), Error);
  st.rho = 0.5;
  cfg.beta = -1;
  CHECK_THROWS_AS(local_train(st, cfg, s), Error);
  ClientState empty;
  cfg.beta = 0;
  CHECK_THROWS_AS(local_train(empty, cfg, s), Error);
}
