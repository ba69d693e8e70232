#pragma once

#include <vector>

#include "conflow/flow.hpp"
#include "conflow/rng.hpp"
#include "conflow/scores.hpp"
#include "conflow/tensor.hpp"

namespace conflow {

struct RepulsionOptions {
  int steps = 50;                    // K rounds
  double step_size = 0.1;            // delta
  double coincidence_floor = 1e-9;   // pairs closer than this get a random push
};

struct RepulsionBatchResult {
  std::vector<Tensor> points;
  bool coincidence_flagged = false;
};

// Pairwise inverse-distance repulsion R_i = sum_{j != i} (y_i - y_j)/||y_i - y_j||^2.
// Coincident pairs receive a random unit direction scaled by 1/floor.
RepulsionBatchResult repulsion_scores(const std::vector<Tensor>& batch,
                                      const RepulsionOptions& opts, RngStream& rng);

// Projection of R onto the tangent space of the level set: (I - g g^T/||g||^2) R.
Tensor tangent_project(const Tensor& r, const Tensor& g);

// K rounds of tangent stepping with flow correction back to the tau level set.
// Every input point must already satisfy |S - tau| <= flow tolerance.
std::vector<Tensor> repulse(const std::vector<Tensor>& batch, const Score& model,
                            const Tensor& yhat, double tau, const RepulsionOptions& opts,
                            const FlowOptions& flow_opts, RngStream& rng);

}  // namespace conflow
