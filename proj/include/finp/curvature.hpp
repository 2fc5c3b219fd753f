#pragma once

// Per-client curvature summaries and the relative overfitting rank built
// from them.

#include <cstddef>
#include <span>
#include <vector>

#include "finp/nncore.hpp"
#include "finp/rng.hpp"

namespace finp::curvature {

struct Options {
  int power_iters = 20;
  double tol = 1e-4;
  int probes = 100;
  std::size_t subsample = 256;
};

// Power iteration on the finite-difference HVP. Returns the signed Rayleigh
// quotient of the dominant (largest |lambda|) eigenpair.
double top_eigenvalue(const nn::GradientFn& grad_fn, std::span<const double> theta, int iters,
                      double tol, Rng& rng);
double top_eigenvalue(const nn::ModelParams& model, const nn::Batch& data, int iters, double tol,
                      Rng& rng);

// Hutchinson estimate: mean over Rademacher probes z of z^T H z.
double hessian_trace(const nn::GradientFn& grad_fn, std::span<const double> theta, int probes,
                     Rng& rng);
double hessian_trace(const nn::ModelParams& model, const nn::Batch& data, int probes, Rng& rng);

struct Ranks {
  std::vector<double> delta_bar;
  std::vector<double> h_bar;
  std::vector<double> rho;
};

Ranks overfitting_ranks(std::span<const double> lambdas, std::span<const double> traces);

struct ClientCurvature {
  double lambda_max = 0.0;
  double trace = 0.0;
};

// Curvature of one client model on (a subsample of) its shard.
ClientCurvature estimate_client(const nn::ModelParams& model, const nn::Batch& shard,
                                const Options& opt, Rng& rng);

struct Report {
  std::vector<double> lambda_max;
  std::vector<double> trace;
  std::vector<double> delta_bar;
  std::vector<double> h_bar;
  std::vector<double> rho;
};

Report make_report(std::span<const ClientCurvature> per_client);

}  // namespace finp::curvature
