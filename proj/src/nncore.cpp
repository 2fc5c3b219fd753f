#include "finp/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "finp/error.hpp"
#include "finp/kernels.hpp"

namespace finp::nn {

std::string_view activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  fail(ErrorKind::config, "unknown activation '" + std::string(name) + "'");
}

std::size_t Architecture::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  return n;
}

std::size_t Architecture::layer_offset(std::size_t l) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < l; ++i) n += layer_sizes[i + 1] * (layer_sizes[i] + 1);
  return n;
}

void Architecture::validate() const {
  if (layer_sizes.size() < 2) fail(ErrorKind::config, "architecture needs at least 2 layer sizes");
  for (auto s : layer_sizes)
    if (s == 0) fail(ErrorKind::config, "layer sizes must be positive");
}

ModelParams::ModelParams(Architecture arch) : arch_(std::move(arch)) {
  arch_.validate();
  flat_.assign(arch_.param_count(), 0.0);
}

ModelParams::ModelParams(Architecture arch, std::vector<double> flat)
    : arch_(std::move(arch)), flat_(std::move(flat)) {
  arch_.validate();
  if (flat_.size() != arch_.param_count())
    fail(ErrorKind::data, "parameter vector has " + std::to_string(flat_.size()) +
                              " entries, architecture needs " +
                              std::to_string(arch_.param_count()));
}

LayerView ModelParams::layer(std::size_t l) const {
  const std::size_t rows = arch_.layer_sizes[l + 1];
  const std::size_t cols = arch_.layer_sizes[l];
  const std::size_t off = arch_.layer_offset(l);
  return {std::span<const double>(flat_).subspan(off, rows * cols),
          std::span<const double>(flat_).subspan(off + rows * cols, rows), rows, cols};
}

ModelParams ModelParams::unflatten(const Architecture& arch, std::span<const double> flat) {
  return ModelParams(arch, std::vector<double>(flat.begin(), flat.end()));
}

bool ModelParams::all_finite() const {
  return std::all_of(flat_.begin(), flat_.end(), [](double x) { return std::isfinite(x); });
}

ModelParams init_model(const Architecture& arch, Rng& rng) {
  ModelParams m(arch);
  auto flat = m.flat();
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::size_t rows = arch.layer_sizes[l + 1];
    const std::size_t cols = arch.layer_sizes[l];
    const double limit = arch.activation == Activation::relu
                             ? std::sqrt(6.0 / static_cast<double>(cols))
                             : std::sqrt(6.0 / static_cast<double>(cols + rows));
    std::uniform_real_distribution<double> u(-limit, limit);
    const std::size_t off = arch.layer_offset(l);
    for (std::size_t i = 0; i < rows * cols; ++i) flat[off + i] = u(rng);
  }
  return m;
}

void Batch::validate(std::size_t classes) const {
  if (labels.empty()) fail(ErrorKind::data, "batch is empty");
  if (inputs.size() != labels.size() * dim) fail(ErrorKind::data, "batch input size mismatch");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      fail(ErrorKind::data, "label " + std::to_string(y) + " outside [0, " +
                                std::to_string(classes) + ")");
}

namespace {

void check_batch(const ModelParams& model, const Batch& batch) {
  if (batch.dim != model.arch().input_dim())
    fail(ErrorKind::data, "batch width " + std::to_string(batch.dim) +
                              " does not match model input width " +
                              std::to_string(model.arch().input_dim()));
  if (batch.inputs.size() != batch.labels.size() * batch.dim)
    fail(ErrorKind::data, "batch input size mismatch");
}

inline double act(Activation a, double z) { return a == Activation::relu ? (z > 0 ? z : 0.0) : std::tanh(z); }

// Per-example scratch space, sized once per call.
struct Workspace {
  std::vector<std::vector<double>> a;   // a[l]: input to layer l
  std::vector<std::vector<double>> z;   // z[l]: pre-activation output of layer l
  std::vector<std::vector<double>> d1;  // sigma'(z[l]) for hidden layers
  std::vector<std::vector<double>> ad;  // tangent inputs
  std::vector<std::vector<double>> zd;  // tangent outputs
  std::vector<double> zbar, zdbar, abar, adbar, tmp;

  explicit Workspace(const Architecture& arch) {
    const std::size_t L = arch.num_layers();
    a.resize(L);
    z.resize(L);
    d1.resize(L);
    ad.resize(L);
    zd.resize(L);
    std::size_t widest = 0;
    for (std::size_t l = 0; l < L; ++l) {
      a[l].resize(arch.layer_sizes[l]);
      ad[l].resize(arch.layer_sizes[l]);
      z[l].resize(arch.layer_sizes[l + 1]);
      zd[l].resize(arch.layer_sizes[l + 1]);
      d1[l].resize(arch.layer_sizes[l + 1]);
      widest = std::max({widest, arch.layer_sizes[l], arch.layer_sizes[l + 1]});
    }
    zbar.resize(widest);
    zdbar.resize(widest);
    abar.resize(widest);
    adbar.resize(widest);
    tmp.resize(widest);
  }
};

// Fills a, z and d1; returns the logits span (z of the last layer).
std::span<const double> forward_row(const ModelParams& model, std::span<const double> x,
                                    Workspace& ws) {
  const auto& arch = model.arch();
  const auto& k = kernels::active();
  const std::size_t L = arch.num_layers();
  std::copy(x.begin(), x.end(), ws.a[0].begin());
  for (std::size_t l = 0; l < L; ++l) {
    const LayerView lv = model.layer(l);
    k.gemv(lv.weights.data(), lv.bias.data(), ws.a[l].data(), ws.z[l].data(), lv.rows, lv.cols);
    if (l + 1 < L) {
      for (std::size_t i = 0; i < lv.rows; ++i) {
        const double zi = ws.z[l][i];
        if (arch.activation == Activation::relu) {
          ws.a[l + 1][i] = zi > 0 ? zi : 0.0;
          ws.d1[l][i] = zi > 0 ? 1.0 : 0.0;
        } else {
          const double t = std::tanh(zi);
          ws.a[l + 1][i] = t;
          ws.d1[l][i] = 1.0 - t * t;
        }
      }
    }
  }
  return ws.z[L - 1];
}

// Tangent pass: zd[L-1] = J v. Requires forward_row on the same example.
std::span<const double> tangent_row(const ModelParams& model, std::span<const double> v,
                                    Workspace& ws) {
  const auto& k = kernels::active();
  const std::size_t L = model.arch().num_layers();
  std::copy(v.begin(), v.end(), ws.ad[0].begin());
  for (std::size_t l = 0; l < L; ++l) {
    const LayerView lv = model.layer(l);
    k.gemv(lv.weights.data(), nullptr, ws.ad[l].data(), ws.zd[l].data(), lv.rows, lv.cols);
    if (l + 1 < L)
      for (std::size_t i = 0; i < lv.rows; ++i) ws.ad[l + 1][i] = ws.d1[l][i] * ws.zd[l][i];
  }
  return ws.zd[L - 1];
}

// out = J^T u for the example held in ws.
void cotangent_row(const ModelParams& model, std::span<const double> u, std::span<double> out,
                   Workspace& ws) {
  const auto& k = kernels::active();
  const std::size_t L = model.arch().num_layers();
  std::vector<double>& g = ws.adbar;
  std::copy(u.begin(), u.end(), g.begin());
  for (std::size_t l = L; l-- > 0;) {
    const LayerView lv = model.layer(l);
    std::fill_n(ws.tmp.begin(), lv.cols, 0.0);
    k.gemv_t_acc(lv.weights.data(), g.data(), ws.tmp.data(), lv.rows, lv.cols);
    if (l == 0) {
      std::copy_n(ws.tmp.begin(), lv.cols, out.begin());
    } else {
      for (std::size_t i = 0; i < lv.cols; ++i) g[i] = ws.d1[l - 1][i] * ws.tmp[i];
    }
  }
}

// log-sum-exp minus the label logit; fills probs with the softmax.
double softmax_ce(std::span<const double> z, int label, std::span<double> probs) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    probs[i] = std::exp(z[i] - mx);
    s += probs[i];
  }
  for (double& p : probs) p /= s;
  return std::log(s) + mx - z[static_cast<std::size_t>(label)];
}

double ce_only(std::span<const double> z, int label) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double zi : z) s += std::exp(zi - mx);
  return std::log(s) + mx - z[static_cast<std::size_t>(label)];
}

// Backward pass for one example. zbar (size C) seeds the primal adjoint;
// when tangent is set, zdbar seeds the tangent adjoint and the pass also
// differentiates through the tangent computation.
void backward_row(const ModelParams& model, Workspace& ws, bool tangent,
                  std::span<double> grad_out) {
  const auto& arch = model.arch();
  const auto& k = kernels::active();
  const std::size_t L = arch.num_layers();
  for (std::size_t l = L; l-- > 0;) {
    const LayerView lv = model.layer(l);
    const std::size_t off = arch.layer_offset(l);
    double* gw = grad_out.data() + off;
    double* gb = gw + lv.rows * lv.cols;
    k.ger(1.0, ws.zbar.data(), ws.a[l].data(), gw, lv.rows, lv.cols);
    for (std::size_t i = 0; i < lv.rows; ++i) gb[i] += ws.zbar[i];
    if (tangent) k.ger(1.0, ws.zdbar.data(), ws.ad[l].data(), gw, lv.rows, lv.cols);
    if (l == 0) break;

    std::fill_n(ws.abar.begin(), lv.cols, 0.0);
    k.gemv_t_acc(lv.weights.data(), ws.zbar.data(), ws.abar.data(), lv.rows, lv.cols);
    if (tangent) {
      std::fill_n(ws.adbar.begin(), lv.cols, 0.0);
      k.gemv_t_acc(lv.weights.data(), ws.zdbar.data(), ws.adbar.data(), lv.rows, lv.cols);
    }
    const auto& d1 = ws.d1[l - 1];
    for (std::size_t i = 0; i < lv.cols; ++i) {
      double zb = d1[i] * ws.abar[i];
      if (tangent) {
        if (arch.activation == Activation::tanh) {
          // d/dz (1 - tanh^2 z) = -2 tanh z (1 - tanh^2 z)
          const double t = ws.a[l][i];
          zb += -2.0 * t * d1[i] * ws.zd[l - 1][i] * ws.adbar[i];
        }
        ws.zdbar[i] = d1[i] * ws.adbar[i];
      }
      ws.zbar[i] = zb;
    }
  }
}

void require_finite(std::span<const double> g, const char* what) {
  for (double x : g)
    if (!std::isfinite(x)) fail(ErrorKind::numeric, std::string("non-finite ") + what);
}

}  // namespace

Logits forward(const ModelParams& model, const Batch& batch) {
  check_batch(model, batch);
  Workspace ws(model.arch());
  Logits out;
  out.rows = batch.size();
  out.cols = model.arch().output_dim();
  out.values.resize(out.rows * out.cols);
  for (std::size_t r = 0; r < batch.size(); ++r) {
    auto z = forward_row(model, batch.row(r), ws);
    std::copy(z.begin(), z.end(), out.values.begin() + static_cast<std::ptrdiff_t>(r * out.cols));
  }
  return out;
}

double loss_ce(const Logits& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows || logits.rows == 0)
    fail(ErrorKind::data, "loss_ce: label count does not match logits");
  double s = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols)
      fail(ErrorKind::data, "loss_ce: label out of range");
    s += ce_only(logits.row(r), y);
  }
  return s / static_cast<double>(logits.rows);
}

double loss(const ModelParams& model, const Batch& batch) {
  return loss_ce(forward(model, batch), batch.labels);
}

std::vector<double> per_example_loss(const ModelParams& model, const Batch& batch) {
  check_batch(model, batch);
  Workspace ws(model.arch());
  std::vector<double> out(batch.size());
  for (std::size_t r = 0; r < batch.size(); ++r)
    out[r] = ce_only(forward_row(model, batch.row(r), ws), batch.labels[r]);
  return out;
}

double accuracy(const ModelParams& model, const Batch& batch) {
  check_batch(model, batch);
  if (batch.size() == 0) return 0.0;
  Workspace ws(model.arch());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    auto z = forward_row(model, batch.row(r), ws);
    const auto pred = std::max_element(z.begin(), z.end()) - z.begin();
    hits += (pred == batch.labels[r]);
  }
  return static_cast<double>(hits) / static_cast<double>(batch.size());
}

RegularizedLoss regularized_loss_and_grad(const ModelParams& model, const Batch& batch,
                                          double weight, std::span<const double> directions,
                                          std::span<double> grad_out) {
  check_batch(model, batch);
  batch.validate(model.arch().output_dim());
  if (grad_out.size() != model.size()) fail(ErrorKind::data, "gradient buffer has wrong size");
  const bool tangent = weight != 0.0;
  if (tangent && directions.size() != batch.size() * batch.dim)
    fail(ErrorKind::data, "penalty directions do not match batch");

  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  Workspace ws(model.arch());
  const std::size_t C = model.arch().output_dim();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double ce_sum = 0.0, pen_sum = 0.0;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    auto z = forward_row(model, batch.row(r), ws);
    const int y = batch.labels[r];
    ce_sum += softmax_ce(z, y, std::span<double>(ws.zbar.data(), C));
    ws.zbar[static_cast<std::size_t>(y)] -= 1.0;
    for (std::size_t i = 0; i < C; ++i) ws.zbar[i] *= inv_n;
    if (tangent) {
      auto u = tangent_row(model, directions.subspan(r * batch.dim, batch.dim), ws);
      const double nu = std::sqrt(kernels::dot(u, u));
      pen_sum += nu;
      const double scale = nu > 0.0 ? weight * inv_n / nu : 0.0;
      for (std::size_t i = 0; i < C; ++i) ws.zdbar[i] = scale * u[i];
    }
    backward_row(model, ws, tangent, grad_out);
  }
  require_finite(grad_out, "gradient");
  RegularizedLoss out;
  out.base = ce_sum * inv_n;
  out.penalty = pen_sum * inv_n;
  out.total = out.base + weight * out.penalty;
  return out;
}

double loss_and_grad(const ModelParams& model, const Batch& batch, std::span<double> grad_out) {
  return regularized_loss_and_grad(model, batch, 0.0, {}, grad_out).base;
}

GradVector grad(const ModelParams& model, const Batch& batch) {
  GradVector g(model.size());
  loss_and_grad(model, batch, g);
  return g;
}

GradientFn gradient_fn(const ModelParams& model, const Batch& batch) {
  return [&model, &batch](std::span<const double> theta, std::span<double> g) {
    ModelParams m = ModelParams::unflatten(model.arch(), theta);
    loss_and_grad(m, batch, g);
  };
}

double hvp_step(std::span<const double> theta) {
  double inf = 0.0;
  for (double x : theta) inf = std::max(inf, std::abs(x));
  return 1e-4 * std::max(1.0, inf);
}

GradVector hvp(const GradientFn& grad_fn, std::span<const double> theta,
               std::span<const double> v) {
  if (v.size() != theta.size()) fail(ErrorKind::data, "hvp: direction has wrong length");
  const std::size_t d = theta.size();
  GradVector out(d, 0.0);
  const double nv = kernels::norm2(v);
  if (nv == 0.0) return out;
  const double eps = hvp_step(theta);
  std::vector<double> plus(theta.begin(), theta.end()), minus(theta.begin(), theta.end());
  kernels::axpy(eps / nv, v, plus);
  kernels::axpy(-eps / nv, v, minus);
  GradVector gm(d);
  grad_fn(plus, out);
  grad_fn(minus, gm);
  kernels::axpy(-1.0, gm, out);
  kernels::scal(nv / (2.0 * eps), out);
  require_finite(out, "Hessian-vector product");
  return out;
}

GradVector hvp(const ModelParams& model, const Batch& batch, std::span<const double> v) {
  if (v.size() != model.size()) fail(ErrorKind::data, "hvp: direction has wrong length");
  return hvp(gradient_fn(model, batch), model.flat(), v);
}

std::vector<double> jvp(const ModelParams& model, std::span<const double> x,
                        std::span<const double> v) {
  if (x.size() != model.arch().input_dim() || v.size() != x.size())
    fail(ErrorKind::data, "jvp: dimension mismatch");
  Workspace ws(model.arch());
  forward_row(model, x, ws);
  auto u = tangent_row(model, v, ws);
  return {u.begin(), u.end()};
}

std::vector<double> vjp(const ModelParams& model, std::span<const double> x,
                        std::span<const double> u) {
  if (x.size() != model.arch().input_dim() || u.size() != model.arch().output_dim())
    fail(ErrorKind::data, "vjp: dimension mismatch");
  Workspace ws(model.arch());
  forward_row(model, x, ws);
  std::vector<double> out(x.size());
  cotangent_row(model, u, out, ws);
  return out;
}

SpectralNormEstimate estimate_input_jacobian_norm(const ModelParams& model, const Batch& batch,
                                                  int iters, Rng& rng) {
  check_batch(model, batch);
  if (iters < 1) fail(ErrorKind::config, "power iteration needs iters >= 1");
  const std::size_t n = batch.size();
  const std::size_t dim = batch.dim;
  Workspace ws(model.arch());
  SpectralNormEstimate est;
  est.sigma.assign(n, 0.0);
  est.directions.assign(n * dim, 0.0);
  std::vector<double> w(dim);
  for (std::size_t r = 0; r < n; ++r) {
    std::span<double> v(est.directions.data() + r * dim, dim);
    fill_normal(rng, v);
    double nv = kernels::norm2(v);
    if (nv == 0.0) {
      v[0] = 1.0;
      nv = 1.0;
    }
    kernels::scal(1.0 / nv, v);
    forward_row(model, batch.row(r), ws);
    for (int it = 0; it < iters; ++it) {
      auto u = tangent_row(model, v, ws);
      cotangent_row(model, u, w, ws);
      const double nw = kernels::norm2(w);
      if (nw == 0.0) break;
      for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / nw;
    }
    auto u = tangent_row(model, v, ws);
    est.sigma[r] = kernels::norm2(u);
    est.mean_sigma += est.sigma[r];
  }
  est.mean_sigma /= static_cast<double>(n);
  return est;
}

double jacobian_input_spectral_norm(const ModelParams& model, const Batch& batch, int iters,
                                    std::uint64_t seed) {
  Rng rng = substream(seed, Stream::penalty);
  return estimate_input_jacobian_norm(model, batch, iters, rng).mean_sigma;
}

void sgd_step(ModelParams& model, std::span<const double> grad, double lr) {
  if (grad.size() != model.size()) fail(ErrorKind::data, "sgd_step: gradient has wrong size");
  std::vector<double> next(model.flat().begin(), model.flat().end());
  kernels::axpy(-lr, grad, next);
  require_finite(next, "weights after SGD step");
  std::copy(next.begin(), next.end(), model.flat().begin());
}

void adam_step(ModelParams& model, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg) {
  const std::size_t d = model.size();
  if (grad.size() != d) fail(ErrorKind::data, "adam_step: gradient has wrong size");
  if (state.m.size() != d) {
    state.m.assign(d, 0.0);
    state.v.assign(d, 0.0);
    state.t = 0;
  }
  const std::int64_t t = state.t + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  std::vector<double> next(model.flat().begin(), model.flat().end());
  std::vector<double> m(state.m), v(state.v);
  for (std::size_t i = 0; i < d; ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mh = m[i] / bc1;
    const double vh = v[i] / bc2;
    next[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
  }
  require_finite(next, "weights after Adam step");
  std::copy(next.begin(), next.end(), model.flat().begin());
  state.m = std::move(m);
  state.v = std::move(v);
  state.t = t;
}

}  // namespace finp::nn
