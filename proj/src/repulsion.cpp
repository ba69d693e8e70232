#include "conflow/repulsion.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace conflow {

RepulsionBatchResult repulsion_scores(const std::vector<Tensor>& batch,
                                      const RepulsionOptions& opts, RngStream& rng) {
  if (batch.size() < 2) throw std::invalid_argument("repulsion_scores: need B >= 2");
  RepulsionBatchResult res;
  res.points.reserve(batch.size());
  for (const Tensor& p : batch) res.points.push_back(Tensor::zeros(p.shape));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (std::size_t j = 0; j < batch.size(); ++j) {
      if (j == i) continue;
      Tensor diff = batch[i] - batch[j];
      double d = norm(diff);
      if (d < opts.coincidence_floor) {
        // Eq.-singular pair: random unit direction at 1/floor magnitude
        res.coincidence_flagged = true;
        Tensor dir = Tensor::zeros(diff.shape);
        double dn = 0;
        while (dn < 1e-12) {
          for (double& v : dir.data) v = rng.normal();
          dn = norm(dir);
        }
        axpy(1.0 / (opts.coincidence_floor * dn), dir, res.points[i]);
      } else {
        axpy(1.0 / (d * d), diff, res.points[i]);
      }
    }
  }
  return res;
}

Tensor tangent_project(const Tensor& r, const Tensor& g) {
  double gsq = sq_norm(g);
  if (gsq <= 0.0) throw std::invalid_argument("tangent_project: zero gradient");
  Tensor out = r;
  axpy(-dot(g, r) / gsq, g, out);
  return out;
}

std::vector<Tensor> repulse(const std::vector<Tensor>& batch, const Score& model,
                            const Tensor& yhat, double tau, const RepulsionOptions& opts,
                            const FlowOptions& flow_opts, RngStream& rng) {
  if (batch.size() < 2) throw std::invalid_argument("repulse: need B >= 2");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (std::abs(model.eval(yhat, batch[i]) - tau) > flow_opts.tolerance)
      throw std::invalid_argument("repulse: member " + std::to_string(i) +
                                  " is not on the boundary");
  }

  // correction after a tangent step starts near the set: try a short polish
  // budget before falling back to a full integration
  FlowOptions short_opts = flow_opts;
  short_opts.steps = 1;
  short_opts.max_polish_steps = 5;

  std::vector<Tensor> pts = batch;
  for (int round = 0; round < opts.steps; ++round) {
    auto rep = repulsion_scores(pts, opts, rng);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      Tensor g = model.grad(yhat, pts[i]);
      Tensor vt = tangent_project(rep.points[i], g);
      axpy(opts.step_size, vt, pts[i]);
      FlowResult corr = integrate_to_boundary(model, yhat, pts[i], tau, short_opts, rng);
      if (!corr.converged)
        corr = integrate_to_boundary(model, yhat, pts[i], tau, flow_opts, rng);
      if (!corr.converged)
        throw std::runtime_error("repulse: flow correction failed for member " +
                                 std::to_string(i));
      pts[i] = std::move(corr.terminal);
    }
  }
  return pts;
}

}  // namespace conflow
