#include "conflow/flow.hpp"

#include <cmath>

namespace conflow {

namespace {

double machine_slack(double tau) { return 1e-13 * std::max(1.0, std::abs(tau)); }

}  // namespace

Tensor velocity(const Score& model, const Tensor& yhat, const Tensor& y, double tau,
                double lambda) {
  double s = model.eval(yhat, y);
  double err = s - tau;
  if (std::abs(err) <= machine_slack(tau)) return Tensor::zeros(y.shape);
  Tensor g = model.grad(yhat, y);
  double gsq = sq_norm(g);
  if (gsq < 1e-12)
    throw DegenerateGradient("velocity: gradient too small off the level set");
  double c = -lambda * err / gsq;
  for (double& v : g.data) v *= c;
  return g;
}

double auto_lambda(double s0, double tau, double eps, double horizon) {
  if (eps <= 0.0) throw std::invalid_argument("auto_lambda: eps must be > 0");
  double gap = std::abs(s0 - tau);
  if (gap <= eps) return 0.0;
  return std::log(gap / eps) / horizon;
}

double hitting_time(double s0, double tau, double eps, double lambda) {
  if (eps <= 0.0) throw std::invalid_argument("hitting_time: eps must be > 0");
  double gap = std::abs(s0 - tau);
  if (gap <= eps) return 0.0;
  if (lambda <= 0.0)
    throw std::invalid_argument("hitting_time: lambda must be > 0 off the level set");
  return std::log(gap / eps) / lambda;
}

namespace {

FlowResult integrate_once(const Score& model, const Tensor& yhat, const Tensor& y0,
                          double tau, const FlowOptions& opts) {
  FlowResult res;
  res.terminal = y0;
  double s = model.eval(yhat, y0);
  res.score_trace.push_back(s);
  res.lambda_used = auto_lambda(s, tau, opts.tolerance, opts.horizon);
  if (std::abs(s - tau) <= opts.tolerance) {
    res.converged = true;
    return res;
  }

  const double dt = opts.horizon / static_cast<double>(opts.steps);
  const double lambda = res.lambda_used;
  Tensor& y = res.terminal;
  for (int k = 0; k < opts.steps; ++k) {
    Tensor k1 = velocity(model, yhat, y, tau, lambda);
    Tensor y2 = y;
    axpy(0.5 * dt, k1, y2);
    Tensor k2 = velocity(model, yhat, y2, tau, lambda);
    Tensor y3 = y;
    axpy(0.5 * dt, k2, y3);
    Tensor k3 = velocity(model, yhat, y3, tau, lambda);
    Tensor y4 = y;
    axpy(dt, k3, y4);
    Tensor k4 = velocity(model, yhat, y4, tau, lambda);
    axpy(dt / 6.0, k1, y);
    axpy(dt / 3.0, k2, y);
    axpy(dt / 3.0, k3, y);
    axpy(dt / 6.0, k4, y);
    if (!y.all_finite()) throw NonFinite("flow state left the finite range");
    res.score_trace.push_back(model.eval(yhat, y));
  }

  // polish: explicit Euler with lambda*dt = 1, a projection-style step
  for (int k = 0; k < opts.max_polish_steps; ++k) {
    s = res.score_trace.back();
    if (std::abs(s - tau) <= opts.tolerance) break;
    Tensor v = velocity(model, yhat, y, tau, 1.0);
    axpy(1.0, v, y);
    if (!y.all_finite()) throw NonFinite("flow state left the finite range");
    res.score_trace.push_back(model.eval(yhat, y));
    res.polish_steps_used = k + 1;
  }
  res.converged = std::abs(res.score_trace.back() - tau) <= opts.tolerance;
  return res;
}

}  // namespace

FlowResult integrate_to_boundary(const Score& model, const Tensor& yhat, const Tensor& y0,
                                 double tau, const FlowOptions& opts, RngStream& rng) {
  if (!y0.all_finite() || !std::isfinite(tau))
    throw std::invalid_argument("integrate_to_boundary: non-finite input");
  try {
    return integrate_once(model, yhat, y0, tau, opts);
  } catch (const DegenerateGradient&) {
    for (int attempt = 0; attempt < opts.jitter_retries; ++attempt) {
      Tensor yj = y0;
      for (double& v : yj.data) v += opts.jitter_sigma * rng.normal();
      try {
        return integrate_once(model, yhat, yj, tau, opts);
      } catch (const DegenerateGradient&) {
        // try again with a fresh jitter
      }
    }
    throw;
  }
}

}  // namespace conflow
