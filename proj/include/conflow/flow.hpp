#pragma once

#include <stdexcept>
#include <vector>

#include "conflow/rng.hpp"
#include "conflow/scores.hpp"
#include "conflow/tensor.hpp"

namespace conflow {

struct NonFinite : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FlowOptions {
  int steps = 20;             // fixed RK4 steps over [0, horizon]
  double horizon = 1.0;
  double tolerance = 1e-6;    // |S - tau| convergence target
  int max_polish_steps = 200;
  double jitter_sigma = 1e-6;
  int jitter_retries = 3;
};

struct FlowResult {
  Tensor terminal;
  std::vector<double> score_trace;  // S(y(t_k)) at every recorded step
  bool converged = false;
  double lambda_used = 0.0;
  int polish_steps_used = 0;
};

// Minimum-norm velocity v = -lambda (S - tau) grad S / ||grad S||^2.
// Returns the zero field when |S - tau| is within machine slack.
Tensor velocity(const Score& model, const Tensor& yhat, const Tensor& y, double tau,
                double lambda);

// lambda achieving |S - tau| <= eps at t = horizon: log(|s0 - tau|/eps)/horizon
double auto_lambda(double s0, double tau, double eps, double horizon = 1.0);

// first eps-hitting time (1/lambda) log(|s0 - tau| / eps); 0 if already inside
double hitting_time(double s0, double tau, double eps, double lambda);

// Integrate the flow from y0 to the tau level set: auto lambda, fixed-step
// RK4 over [0, horizon], then explicit-Euler polish steps (lambda*dt = 1)
// until |S - tau| <= tolerance. A degenerate gradient at y0 triggers
// Gaussian jitter-and-retry.
FlowResult integrate_to_boundary(const Score& model, const Tensor& yhat, const Tensor& y0,
                                 double tau, const FlowOptions& opts, RngStream& rng);

}  // namespace conflow
