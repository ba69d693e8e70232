#pragma once

#include <cstdint>
#include <vector>

#include "conflow/rng.hpp"
#include "conflow/tensor.hpp"

namespace conflow {

// One exchangeable split: rows are i.i.d. given the generator parameters.
struct DataSplit {
  std::vector<Tensor> x;
  std::vector<Tensor> y;
};

struct Dataset {
  DataSplit train;
  DataSplit cal;
  DataSplit test;
  std::uint64_t seed = 0;
};

enum class Gp1dVariant { Symmetric, Asym, BiasMu, BiasMuSigma };

// Y = X Theta + eps, everything standard normal. Theta is shared across the
// three splits; each split draws X and eps from its own stream.
Dataset gen_linear_gaussian(std::size_t p, std::size_t n, std::uint64_t seed);

// Same linear model with heteroskedastic t_3 noise, eps_ij ~ t_3 * sigma_j,
// sigma_j = exp(alpha_j), alpha_j linear from 0 to 1.5 across coordinates.
Dataset gen_linear_student_t(std::size_t p, std::size_t n, std::uint64_t seed);

// 1-D GP pairs on p equispaced points of [0,1]. X ~ GP(se, lx), Y = beta X +
// eps with eps ~ GP(se, ly). Dense Cholesky with 1e-8 jitter. Bias variants
// transform the outputs, train differently from cal/test.
Dataset gen_gp1d(std::size_t n, std::size_t p, double lx, double ly, double beta,
                 Gp1dVariant variant, std::uint64_t seed);

// 2-D GP pairs on a p x p grid via circulant embedding (p must be a power of
// two). Y = beta X + eps with independent fields of length scales lx, ly.
Dataset gen_gp2d(std::size_t n, std::size_t p, double lx, double ly, double beta,
                 std::uint64_t seed);

// Downscaling task: target is the high resolution field, input its bilinear
// q x q reduction.
Dataset gen_gp2d_downscale(std::size_t n, std::size_t p, std::size_t q, double lx,
                           double ly, double beta, std::uint64_t seed);

// Smooth planar curves (integrated smoothed velocity), shape {T, 2}. x rows
// are noisy copies of the targets with the given noise scale.
Dataset gen_trajectories(std::size_t n, std::size_t t_len, double noise_sigma,
                         std::uint64_t seed);

// Draw one zero mean GP field with the given length scale; helper shared with
// the benchmarks.
Tensor sample_gp2d_field(std::size_t p, double length_scale, RngStream& rng);

struct LinearPredictor {
  // flattened input dim d, output dim m; weights d x m row major
  std::vector<double> weights;
  std::vector<double> x_mean;
  std::vector<double> y_mean;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  Tensor predict(const Tensor& x, const std::vector<std::size_t>& out_shape) const;
};

// Closed form ridge regression on flattened, centered inputs.
LinearPredictor fit_ridge(const DataSplit& train, double ridge_lambda);

}  // namespace conflow
