#pragma once

#include <vector>

#include "conflow/tensor.hpp"

namespace conflow {

struct MetricConfig {
  std::size_t patch_size = 7;
  std::size_t stride = 4;
  std::vector<double> bandwidth_multipliers = {0.5, 1.0, 2.0};
  bool standardize_patches = false;
};

// ED = (1/K) sum ||y_k - y|| - (1/2K^2) sum ||y_k - y_k'|| with RMS norms
double energy_distance(const std::vector<Tensor>& samples, const Tensor& target);

// mean over samples of MSE between log(1 + S/beta) spectra, beta = mean
// spectral power of the target (floored at 1e-12)
double lsd(const std::vector<Tensor>& samples, const Tensor& target);

// unbiased patch MMD^2 averaged over median-heuristic bandwidth multiples
double patch_mmd(const std::vector<Tensor>& samples, const Tensor& target,
                 const MetricConfig& cfg = {});

// Vendi effective diversity: exp entropy of eigenvalues of the K x K cosine
// similarity matrix divided by K
double vendi_score(const std::vector<Tensor>& samples);

double vendi_ratio(const std::vector<Tensor>& samples,
                   const std::vector<Tensor>& reference);

}  // namespace conflow
