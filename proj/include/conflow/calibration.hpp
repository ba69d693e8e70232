#pragma once

#include <vector>

#include "conflow/tensor.hpp"

namespace conflow {

struct ThresholdResult {
  double tau = 0.0;
  bool clamped = false;  // k fell outside [1, n]
};

// Sorted calibration scores defining the map alpha -> tau_alpha.
class Filtration {
 public:
  explicit Filtration(std::vector<double> scores);

  // tau_alpha = S_(k), k = ceil((1-alpha)(n+1)); k > n clamps to S_(n).
  ThresholdResult threshold(double alpha) const;

  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& sorted_scores() const { return sorted_; }

 private:
  std::vector<double> sorted_;
};

// --- localized thresholds ---

struct LocalizerConfig {
  double bandwidth = 1.0;
  // calibration-only standardization stats, per feature
  std::vector<double> feat_mean;
  std::vector<double> feat_std;
};

struct LocalThresholdResult {
  double tau = 0.0;
  bool uniform_fallback = false;  // all RBF weights underflowed
};

// Filtration with per-sample features for weighted-quantile local thresholds.
class LocalFiltration {
 public:
  // features[i] belongs to scores[i]; cfg standardization is computed here
  // from the calibration features; bandwidth <= 0 requests the median
  // pairwise-distance heuristic.
  LocalFiltration(std::vector<double> scores, std::vector<std::vector<double>> features,
                  double bandwidth = -1.0);

  LocalThresholdResult threshold(const std::vector<double>& query_features,
                                 double alpha) const;

  const LocalizerConfig& config() const { return cfg_; }

 private:
  std::vector<double> standardize(const std::vector<double>& f) const;
  std::vector<double> scores_;
  std::vector<std::vector<double>> std_features_;
  LocalizerConfig cfg_;
};

// per-channel mean/std of x plus a vectorized 8x8 nearest-resize of the
// channel-mean field; length 2C + 64
std::vector<double> extract_field_features(const Tensor& x);

// (mean_speed, std_speed, mean_curvature, mean_turn) of a T x 2 trajectory
std::vector<double> extract_traj_features(const Tensor& yhat);

}  // namespace conflow
