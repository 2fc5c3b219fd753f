#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "finp/error.hpp"
#include "finp/nncore.hpp"
#include "support.hpp"

using namespace finp;
using namespace finp::nn;
using testing::arch;

namespace {

Batch one_row(std::vector<double> x, int label = 0) {
  Batch b;
  b.dim = x.size();
  b.inputs = std::move(x);
  b.labels = {label};
  return b;
}

ModelParams linear(std::vector<double> w, std::vector<double> b, std::size_t in, std::size_t out) {
  std::vector<double> flat = w;
  flat.insert(flat.end(), b.begin(), b.end());
  return ModelParams(arch({in, out}, Activation::relu), flat);
}

double sigma_max(const std::vector<double>& m, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd a(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) a(r, c) = m[r * cols + c];
  return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
}

}  // namespace

TEST_CASE("forward: identity layer, zero model, hand-set relu net") {
  const auto id = linear({1, 0, 0, 1}, {0, 0}, 2, 2);
  const auto out = forward(id, one_row({1, 2}));
  CHECK(out.values == std::vector<double>{1, 2});

  ModelParams zero(arch({3, 4, 2}, Activation::relu));
  CHECK(forward(zero, one_row({5, -1, 2})).values == std::vector<double>{0, 0});

  // 2 -> 2 (relu) -> 1
  // h = relu([[1,-1],[2,1]] x + [0,-1]); y = [3,-2] h + 0.5
  ModelParams net(arch({2, 2, 1}, Activation::relu), {1, -1, 2, 1, 0, -1, 3, -2, 0.5});
  // x = [1,2]: pre = [-1, 3] -> h = [0, 3] -> y = -6 + 0.5
  CHECK(forward(net, one_row({1, 2})).values[0] == doctest::Approx(-5.5));
  // x = [2,1]: pre = [1, 4] -> h = [1, 4] -> y = 3 - 8 + 0.5
  CHECK(forward(net, one_row({2, 1})).values[0] == doctest::Approx(-4.5));
}

TEST_CASE("forward rejects a width mismatch") {
  ModelParams m(arch({3, 2}));
  CHECK_THROWS_AS(forward(m, one_row({1, 2})), Error);
}

TEST_CASE("cross-entropy closed forms") {
  Logits l{1, 2, {0, 0}};
  const int y0[] = {0}, y1[] = {1};
  CHECK(loss_ce(l, y0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(loss_ce(l, y0) == loss_ce(l, y1));
  Logits sharp{1, 3, {20, 0, 0}};
  CHECK(loss_ce(sharp, y0) < 1e-8);
  Logits uni{2, 5, std::vector<double>(10, 0.7)};
  const int y[] = {1, 4};
  CHECK(loss_ce(uni, y) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("gradient matches central differences on 20+ random small models") {
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    Rng rng = substream(seed, Stream::init);
    const auto act = seed % 2 ? Activation::tanh : Activation::relu;
    const auto a = arch({3, 4, 3}, act);  // 31 parameters
    REQUIRE(a.param_count() <= 50);
    const auto m = testing::random_model(a, rng, 0.3);
    const auto b = testing::random_batch(6, 3, 3, rng);
    const auto g = grad(m, b);
    const auto fd = testing::fd_grad(m, b, 1e-4);
    for (std::size_t i = 0; i < g.size(); ++i) {
      CAPTURE(seed);
      CAPTURE(i);
      // relu kinks inside the FD stencil are rare but possible; use an absolute floor.
      CHECK(std::abs(g[i] - fd[i]) <= 1e-3 * std::max(std::abs(fd[i]), 1e-3));
    }
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("gradient is invariant to duplicating the batch") {
  Rng rng = substream(5, Stream::init);
  const auto m = testing::random_model(arch({4, 5, 3}), rng);
  auto b = testing::random_batch(7, 4, 3, rng);
  const auto g1 = grad(m, b);
  Batch bb = b;
  bb.inputs.insert(bb.inputs.end(), b.inputs.begin(), b.inputs.end());
  bb.labels.insert(bb.labels.end(), b.labels.begin(), b.labels.end());
  const auto g2 = grad(m, bb);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(g1[i]).epsilon(1e-12));
}

TEST_CASE("gradient vanishes at a fitted minimum") {
  // Two separable points, linear model pushed far along the separating direction:
  // the loss and its gradient both go to zero.
  const auto m = linear({40, 0, -40, 0}, {0, 0}, 2, 2);
  Batch b;
  b.dim = 2;
  b.inputs = {1, 0, -1, 0};
  b.labels = {0, 1};
  const auto g = grad(m, b);
  CHECK(std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0)) < 1e-6);
}

TEST_CASE("hvp on quadratic surrogates") {
  const GradientFn identity = [](std::span<const double> t, std::span<double> g) {
    std::copy(t.begin(), t.end(), g.begin());
  };
  const std::vector<double> theta{0.3, -1.2, 4.0};
  const std::vector<double> v{1.0, 2.0, -0.5};
  const auto hv = hvp(identity, theta, v);
  for (std::size_t i = 0; i < 3; ++i) CHECK(hv[i] == doctest::Approx(v[i]).epsilon(1e-9));

  const GradientFn diag23 = [](std::span<const double> t, std::span<double> g) {
    g[0] = 2 * t[0];
    g[1] = 3 * t[1];
  };
  const auto h = hvp(diag23, std::vector<double>{0.5, -0.5}, std::vector<double>{1, 1});
  CHECK(h[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(h[1] == doctest::Approx(3.0).epsilon(1e-9));

  const auto zero = hvp(diag23, std::vector<double>{1, 1}, std::vector<double>{0, 0});
  CHECK(zero == std::vector<double>{0, 0});
}

TEST_CASE("hvp is linear and symmetric on a network") {
  Rng rng = substream(9, Stream::init);
  const auto m = testing::random_model(arch({3, 6, 3}), rng, 0.2);
  const auto b = testing::random_batch(16, 3, 3, rng);
  std::vector<double> u(m.size()), v(m.size());
  fill_normal(rng, u);
  fill_normal(rng, v);
  const auto hv = hvp(m, b, v);
  auto v3 = v;
  for (auto& x : v3) x *= 3.0;
  const auto h3 = hvp(m, b, v3);
  for (std::size_t i = 0; i < v.size(); ++i)
    CHECK(std::abs(h3[i] - 3 * hv[i]) <= 1e-3 * std::max(std::abs(3 * hv[i]), 1e-3));
  const auto hu = hvp(m, b, u);
  const double uhv = std::inner_product(u.begin(), u.end(), hv.begin(), 0.0);
  const double vhu = std::inner_product(v.begin(), v.end(), hu.begin(), 0.0);
  CHECK(testing::rel_err(uhv, vhu) < 1e-2);
}

TEST_CASE("jacobian spectral norm: linear models are exact") {
  Rng rng = substream(1, Stream::penalty);
  const auto w31 = linear({3, 0, 0, 1}, {0.5, -2}, 2, 2);
  Batch b;
  b.dim = 2;
  b.inputs = {1, 2, -3, 0.5, 0, 0};
  b.labels = {0, 1, 0};
  CHECK(jacobian_input_spectral_norm(w31, b, 20) == doctest::Approx(3.0).epsilon(1e-4));
  const auto id = linear({1, 0, 0, 1}, {0, 0}, 2, 2);
  CHECK(jacobian_input_spectral_norm(id, b, 5) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("jacobian spectral norm matches an explicit-Jacobian SVD") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    Rng rng = substream(seed, Stream::init);
    const auto act = seed % 2 ? Activation::relu : Activation::tanh;
    const auto m = testing::random_model(arch({3, 8, 2}, act), rng, 0.3);
    const auto b = testing::random_batch(4, 3, 2, rng);
    double oracle = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i)
      oracle += sigma_max(testing::explicit_jacobian(m, b.row(i)), 2, 3);
    oracle /= static_cast<double>(b.size());
    CHECK(testing::rel_err(jacobian_input_spectral_norm(m, b, 50, seed), oracle) < 1e-3);
  }
}

TEST_CASE("jvp and vjp are adjoint") {
  Rng rng = substream(4, Stream::init);
  const auto m = testing::random_model(arch({5, 7, 4}), rng);
  std::vector<double> x(5), v(5), u(4);
  fill_normal(rng, x);
  fill_normal(rng, v);
  fill_normal(rng, u);
  const auto jv = jvp(m, x, v);
  const auto ju = vjp(m, x, u);
  const double a = std::inner_product(u.begin(), u.end(), jv.begin(), 0.0);
  const double b = std::inner_product(v.begin(), v.end(), ju.begin(), 0.0);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
  const auto jac = testing::explicit_jacobian(m, x);
  for (std::size_t r = 0; r < 4; ++r) {
    double want = 0.0;
    for (std::size_t c = 0; c < 5; ++c) want += jac[r * 5 + c] * v[c];
    CHECK(jv[r] == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("regularized gradient matches finite differences with frozen directions") {
  for (auto act : {Activation::relu, Activation::tanh}) {
    Rng rng = substream(3, Stream::init);
    const auto m = testing::random_model(arch({3, 5, 3}, act), rng, 0.3);
    const auto b = testing::random_batch(5, 3, 3, rng);
    Rng prng = substream(3, Stream::penalty);
    const auto est = estimate_input_jacobian_norm(m, b, 10, prng);
    const double weight = 0.7;
    std::vector<double> g(m.size());
    const auto rl = regularized_loss_and_grad(m, b, weight, est.directions, g);
    CHECK(rl.total == doctest::Approx(rl.base + weight * rl.penalty).epsilon(1e-12));

    auto objective = [&](const ModelParams& p) {
      std::vector<double> scratch(p.size());
      return regularized_loss_and_grad(p, b, weight, est.directions, scratch).total;
    };
    for (std::size_t i = 0; i < m.size(); ++i) {
      auto pp = m, mm = m;
      pp.flat()[i] += 1e-5;
      mm.flat()[i] -= 1e-5;
      const double fd = (objective(pp) - objective(mm)) / 2e-5;
      CAPTURE(i);
      CHECK(std::abs(g[i] - fd) <= 1e-4 * std::max(std::abs(fd), 1e-2));
    }
  }
}

TEST_CASE("zero regularization weight reproduces the plain gradient bit for bit") {
  Rng rng = substream(8, Stream::init);
  const auto m = testing::random_model(arch({4, 6, 3}), rng);
  const auto b = testing::random_batch(9, 4, 3, rng);
  std::vector<double> g1(m.size()), g2(m.size());
  const double l1 = loss_and_grad(m, b, g1);
  const auto l2 = regularized_loss_and_grad(m, b, 0.0, {}, g2);
  CHECK(l1 == l2.total);
  CHECK(g1 == g2);
}

TEST_CASE("optimizer steps") {
  ModelParams m(arch({1, 1}), {1.0, 0.0});
  const std::vector<double> g{2.0, 0.0};
  sgd_step(m, g, 0.1);
  CHECK(m.flat()[0] == doctest::Approx(0.8).epsilon(1e-15));

  ModelParams still(arch({1, 1}), {1.0, -1.0});
  sgd_step(still, std::vector<double>{0.0, 0.0}, 0.5);
  CHECK(still.flat()[0] == 1.0);
  CHECK(still.flat()[1] == -1.0);

  ModelParams a(arch({1, 1}), {0.0, 0.0});
  AdamState st;
  adam_step(a, std::vector<double>{1.0, 1.0}, st, AdamConfig{});
  CHECK(std::abs(a.flat()[0] + 0.001) < 1e-6);
  CHECK(st.t == 1);

  ModelParams bad(arch({1, 1}), {0.0, 0.0});
  CHECK_THROWS_AS(sgd_step(bad, std::vector<double>{NAN, 0.0}, 0.1), Error);
  CHECK(bad.flat()[0] == 0.0);
}

TEST_CASE("flatten and unflatten are inverse") {
  Rng rng = substream(2, Stream::init);
  const auto a = arch({6, 5, 4, 3});
  const auto m = testing::random_model(a, rng);
  const auto flat = m.flatten();
  CHECK(flat.size() == a.param_count());
  const auto back = ModelParams::unflatten(a, flat);
  CHECK(back == m);
  CHECK(back.flatten() == flat);
  CHECK_THROWS_AS(ModelParams::unflatten(a, std::vector<double>(flat.size() - 1)), Error);
  const auto l1 = m.layer(1);
  CHECK(l1.rows == 4);
  CHECK(l1.cols == 5);
  CHECK(l1.weights.data() == m.flat().data() + a.layer_offset(1));
}

TEST_CASE("accuracy breaks ties toward the lowest class") {
  ModelParams zero(arch({2, 3}));
  Batch b;
  b.dim = 2;
  b.inputs = {1, 1, 2, 2};
  b.labels = {0, 2};
  CHECK(accuracy(zero, b) == 0.5);
}
