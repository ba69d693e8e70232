#include "conflow/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "conflow/numerics.hpp"
#include "conflow/scores.hpp"

namespace conflow {

Filtration::Filtration(std::vector<double> scores) : sorted_(std::move(scores)) {
  if (sorted_.empty()) throw std::invalid_argument("filtration: empty scores");
  std::sort(sorted_.begin(), sorted_.end());
}

ThresholdResult Filtration::threshold(double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("threshold: alpha outside (0,1)");
  const std::size_t n = sorted_.size();
  double kf = std::ceil((1.0 - alpha) * static_cast<double>(n + 1));
  auto k = static_cast<long long>(kf);
  ThresholdResult r;
  if (k < 1) {
    k = 1;
    r.clamped = true;
  } else if (k > static_cast<long long>(n)) {
    k = static_cast<long long>(n);
    r.clamped = true;
  }
  r.tau = sorted_[static_cast<std::size_t>(k - 1)];
  return r;
}

LocalFiltration::LocalFiltration(std::vector<double> scores,
                                 std::vector<std::vector<double>> features,
                                 double bandwidth)
    : scores_(std::move(scores)) {
  if (scores_.empty() || features.size() != scores_.size())
    throw std::invalid_argument("local filtration: scores/features mismatch");
  const std::size_t d = features.front().size();
  cfg_.feat_mean.assign(d, 0.0);
  cfg_.feat_std.assign(d, 0.0);
  const double n = static_cast<double>(features.size());
  for (const auto& f : features)
    for (std::size_t j = 0; j < d; ++j) cfg_.feat_mean[j] += f[j] / n;
  for (const auto& f : features)
    for (std::size_t j = 0; j < d; ++j) {
      double z = f[j] - cfg_.feat_mean[j];
      cfg_.feat_std[j] += z * z / n;
    }
  for (std::size_t j = 0; j < d; ++j)
    cfg_.feat_std[j] = std::max(std::sqrt(cfg_.feat_std[j]), 1e-12);

  std_features_.reserve(features.size());
  for (const auto& f : features) std_features_.push_back(standardize(f));

  if (bandwidth > 0.0) {
    cfg_.bandwidth = bandwidth;
  } else {
    // median heuristic over pairwise distances of standardized features
    std::vector<double> dists;
    dists.reserve(std_features_.size() * (std_features_.size() - 1) / 2);
    for (std::size_t i = 0; i < std_features_.size(); ++i)
      for (std::size_t k = i + 1; k < std_features_.size(); ++k) {
        double ss = 0;
        for (std::size_t j = 0; j < d; ++j) {
          double z = std_features_[i][j] - std_features_[k][j];
          ss += z * z;
        }
        dists.push_back(std::sqrt(ss));
      }
    cfg_.bandwidth = dists.empty() ? 1.0 : std::max(median(std::move(dists)), 1e-12);
  }
}

std::vector<double> LocalFiltration::standardize(const std::vector<double>& f) const {
  if (f.size() != cfg_.feat_mean.size())
    throw std::invalid_argument("local filtration: feature dimension mismatch");
  std::vector<double> out(f.size());
  for (std::size_t j = 0; j < f.size(); ++j)
    out[j] = (f[j] - cfg_.feat_mean[j]) / cfg_.feat_std[j];
  return out;
}

LocalThresholdResult LocalFiltration::threshold(const std::vector<double>& query_features,
                                                double alpha) const {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("local threshold: alpha outside (0,1)");
  std::vector<double> q = standardize(query_features);
  std::vector<double> w(scores_.size());
  const double h2 = 2.0 * cfg_.bandwidth * cfg_.bandwidth;
  double total = 0;
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    double ss = 0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      double z = std_features_[i][j] - q[j];
      ss += z * z;
    }
    w[i] = std::exp(-ss / h2);
    total += w[i];
  }
  LocalThresholdResult r;
  if (total <= 0.0) {
    std::fill(w.begin(), w.end(), 1.0);
    r.uniform_fallback = true;
  }
  r.tau = weighted_quantile(scores_, w, 1.0 - alpha);
  return r;
}

std::vector<double> extract_field_features(const Tensor& x) {
  std::size_t h, w, c;
  if (x.shape.size() == 2) {
    h = x.shape[0];
    w = x.shape[1];
    c = 1;
  } else if (x.shape.size() == 3) {
    h = x.shape[0];
    w = x.shape[1];
    c = x.shape[2];
  } else {
    throw std::invalid_argument("extract_field_features: expected H x W (x C) tensor");
  }
  std::vector<double> feats;
  feats.reserve(2 * c + 64);
  Tensor mean_plane = Tensor::zeros({h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double m = 0, v = 0;
    const double n = static_cast<double>(h * w);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) m += x.data[(i * w + j) * c + ch] / n;
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double z = x.data[(i * w + j) * c + ch] - m;
        v += z * z / n;
        mean_plane.at(i, j) += x.data[(i * w + j) * c + ch] / static_cast<double>(c);
      }
    feats.push_back(m);
    feats.push_back(std::sqrt(v));
  }
  Tensor pooled = resize(mean_plane, 8, 8, ResizeMode::Nearest);
  feats.insert(feats.end(), pooled.data.begin(), pooled.data.end());
  return feats;
}

std::vector<double> extract_traj_features(const Tensor& yhat) {
  if (yhat.shape.size() != 2 || yhat.shape[1] != 2 || yhat.shape[0] < 3)
    throw std::invalid_argument("extract_traj_features: expected T x 2 tensor, T >= 3");
  const std::size_t T = yhat.shape[0];
  double mean_speed = 0, var_speed = 0, mean_curv = 0, mean_turn = 0;
  std::vector<double> speeds(T - 1);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    double dx = yhat.at(t + 1, 0) - yhat.at(t, 0);
    double dy = yhat.at(t + 1, 1) - yhat.at(t, 1);
    speeds[t] = std::sqrt(dx * dx + dy * dy);
    mean_speed += speeds[t] / static_cast<double>(T - 1);
  }
  for (double s : speeds) {
    double z = s - mean_speed;
    var_speed += z * z / static_cast<double>(T - 1);
  }
  for (std::size_t t = 0; t + 2 < T; ++t) {
    double ddx = yhat.at(t + 2, 0) - 2.0 * yhat.at(t + 1, 0) + yhat.at(t, 0);
    double ddy = yhat.at(t + 2, 1) - 2.0 * yhat.at(t + 1, 1) + yhat.at(t, 1);
    mean_curv += std::sqrt(ddx * ddx + ddy * ddy) / static_cast<double>(T - 2);
  }
  // turning angles with clipped arccos (degenerate zero-speed steps included)
  for (std::size_t t = 0; t + 2 < T; ++t) {
    double v0x = yhat.at(t + 1, 0) - yhat.at(t, 0);
    double v0y = yhat.at(t + 1, 1) - yhat.at(t, 1);
    double v1x = yhat.at(t + 2, 0) - yhat.at(t + 1, 0);
    double v1y = yhat.at(t + 2, 1) - yhat.at(t + 1, 1);
    double n0 = std::sqrt(v0x * v0x + v0y * v0y);
    double n1 = std::sqrt(v1x * v1x + v1y * v1y);
    double a = (v0x * v1x + v0y * v1y) / (n0 * n1 + kEpsNum);
    a = std::clamp(a, -kArccosClip, kArccosClip);
    mean_turn += std::acos(a) / static_cast<double>(T - 2);
  }
  return {mean_speed, std::sqrt(var_speed), mean_curv, mean_turn};
}

}  // namespace conflow
