#pragma once

// Small dense feed-forward classifier with hand-written reverse mode.
//
// Parameters live in one flat vector; layer l occupies
//   [weights (out x in, row-major) | bias (out)]
// in order, so the flat view doubles as the GradVector layout.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "finp/rng.hpp"

namespace finp::nn {

enum class Activation { relu, tanh };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct Architecture {
  // input width, hidden widths..., class count; at least two entries.
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::relu;

  std::size_t num_layers() const { return layer_sizes.size() - 1; }
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  std::size_t param_count() const;
  std::size_t layer_offset(std::size_t l) const;
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

struct LayerView {
  std::span<const double> weights;
  std::span<const double> bias;
  std::size_t rows;
  std::size_t cols;
};

class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(Architecture arch);
  ModelParams(Architecture arch, std::vector<double> flat);

  const Architecture& arch() const { return arch_; }
  std::size_t size() const { return flat_.size(); }
  std::span<const double> flat() const { return flat_; }
  std::span<double> flat() { return flat_; }
  LayerView layer(std::size_t l) const;

  std::vector<double> flatten() const { return flat_; }
  static ModelParams unflatten(const Architecture& arch, std::span<const double> flat);

  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  Architecture arch_;
  std::vector<double> flat_;
};

// He-uniform weights (Glorot for tanh), zero biases.
ModelParams init_model(const Architecture& arch, Rng& rng);

struct Batch {
  std::size_t dim = 0;
  std::vector<double> inputs;  // row-major, size() x dim
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {inputs.data() + i * dim, dim}; }
  void validate(std::size_t classes) const;
};

struct Logits {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

using GradVector = std::vector<double>;

Logits forward(const ModelParams& model, const Batch& batch);

// Mean softmax cross-entropy.
double loss_ce(const Logits& logits, std::span<const int> labels);
double loss(const ModelParams& model, const Batch& batch);
std::vector<double> per_example_loss(const ModelParams& model, const Batch& batch);
double accuracy(const ModelParams& model, const Batch& batch);

GradVector grad(const ModelParams& model, const Batch& batch);
// Writes the gradient into grad_out (size d) and returns the loss.
double loss_and_grad(const ModelParams& model, const Batch& batch, std::span<double> grad_out);

// Gradient oracle over a flat parameter vector. Used to run the curvature
// machinery on surrogate objectives as well as on networks.
using GradientFn = std::function<void(std::span<const double> theta, std::span<double> grad)>;

GradientFn gradient_fn(const ModelParams& model, const Batch& batch);

// Finite-difference step used by hvp: 1e-4 * max(1, |theta|_inf).
double hvp_step(std::span<const double> theta);

// H v by central differences of the gradient along v/|v|.
GradVector hvp(const GradientFn& grad_fn, std::span<const double> theta,
               std::span<const double> v);
GradVector hvp(const ModelParams& model, const Batch& batch, std::span<const double> v);

// Input->logits Jacobian products for a single example.
std::vector<double> jvp(const ModelParams& model, std::span<const double> x,
                        std::span<const double> v);
std::vector<double> vjp(const ModelParams& model, std::span<const double> x,
                        std::span<const double> u);

struct SpectralNormEstimate {
  double mean_sigma = 0.0;
  std::vector<double> sigma;       // per row
  std::vector<double> directions;  // per row unit input direction, size() x input_dim
};

// Power iteration on J^T J for every row, starting from a Gaussian vector.
SpectralNormEstimate estimate_input_jacobian_norm(const ModelParams& model, const Batch& batch,
                                                  int iters, Rng& rng);
double jacobian_input_spectral_norm(const ModelParams& model, const Batch& batch, int iters,
                                    std::uint64_t seed = 0);

struct RegularizedLoss {
  double total = 0.0;
  double base = 0.0;
  double penalty = 0.0;
};

// Gradient of  CE + weight * mean_r |J_r(theta) v_r|  with the directions v_r
// held fixed. weight == 0 skips the tangent pass entirely and reproduces
// loss_and_grad exactly.
RegularizedLoss regularized_loss_and_grad(const ModelParams& model, const Batch& batch,
                                          double weight, std::span<const double> directions,
                                          std::span<double> grad_out);

void sgd_step(ModelParams& model, std::span<const double> grad, double lr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

void adam_step(ModelParams& model, std::span<const double> grad, AdamState& state,
               const AdamConfig& cfg);

}  // namespace finp::nn
