#include "doctest.h"
#include "finp/config.hpp"
#include "finp/error.hpp"

using namespace finp;

TEST_CASE("defaults and overrides") {
  const auto d = parse_config("");
  CHECK(d.strategy == Strategy::fedavg);
  CHECK(d.n_per_client == 50);
  CHECK(d.convergence_delta == 0.01);
  const auto c = parse_config(
      "# comment\n"
      "seed = 9\n"
      "strategy = finp_full_ala   # trailing\n"
      "beta = 0.25\n"
      "hidden = 32, 16\n"
      "activation = tanh\n"
      "tie_break = random\n"
      "curvature_always = true\n");
  CHECK(c.seed == 9);
  CHECK(c.strategy == Strategy::finp_full_ala);
  CHECK(c.beta == 0.25);
  CHECK(c.hidden == std::vector<std::size_t>{32, 16});
  CHECK(c.activation == nn::Activation::tanh);
  CHECK(c.tie_break == attack::TieBreak::random);
  CHECK(c.curvature_always);
  CHECK(parse_config("hidden = none").hidden.empty());
}

TEST_CASE("unknown keys and bad values are config errors with a location") {
  auto expect_config_error = [](const char* text, const char* fragment) {
    try {
      parse_config(text, "t.cfg");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::config);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  expect_config_error("seed = 1\nlearning_rate = 3\n", "t.cfg:2");
  expect_config_error("rounds = two\n", "t.cfg:1");
  expect_config_error("strategy = fedprox\n", "fedprox");
  expect_config_error("clients = 1\n", "clients");
  expect_config_error("rounds = 0\n", "rounds");
  expect_config_error("no equals sign\n", "t.cfg:1");
  expect_config_error("dataset = csv\n", "csv_dir");
}

TEST_CASE("strategy properties") {
  CHECK_FALSE(uses_client_regularizer(Strategy::fedavg));
  CHECK_FALSE(uses_client_regularizer(Strategy::finp_server_pca));
  CHECK(uses_client_regularizer(Strategy::finp_full_pca));
  CHECK(aggregator_of(Strategy::finp_server_ala) == Aggregator::ala);
  CHECK(needs_rho(Strategy::finp_server_ala));
  CHECK_FALSE(needs_rho(Strategy::finp_server_pca));
  for (auto s : {Strategy::fedavg, Strategy::finp_client_only, Strategy::finp_server_pca, Strategy::finp_server_ala,
                 Strategy::finp_full_pca, Strategy::finp_full_ala})
    CHECK(parse_strategy(strategy_name(s)) == s);
}

TEST_CASE("beta only reaches clients under regularizing strategies") {
  auto c = parse_config("beta = 0.5\nstrategy = fedavg\n");
  CHECK(c.client_config().beta == 0.0);
  c.strategy = Strategy::finp_client_only;
  CHECK(c.client_config().beta == 0.5);
}

TEST_CASE("resolved text parses back to the same config") {
  const auto c = parse_config("seed = 4\nstrategy = finp_server_pca\nlr = 0.003\nhidden = 8,4\nalpha = 0.1\n");
  const auto again = parse_config(c.to_text());
  CHECK(again.to_text() == c.to_text());
  CHECK(again.lr == 0.003);
  CHECK(again.hidden == c.hidden);
}
