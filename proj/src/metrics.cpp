#include "conflow/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "conflow/numerics.hpp"

namespace conflow {

namespace {

double rms_distance(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("metric: shape mismatch");
  double ss = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double d = a.data[i] - b.data[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(a.numel()));
}

}  // namespace

double energy_distance(const std::vector<Tensor>& samples, const Tensor& target) {
  if (samples.empty()) throw std::invalid_argument("energy_distance: need K >= 1");
  const double k = static_cast<double>(samples.size());
  double cross = 0;
  for (const Tensor& s : samples) cross += rms_distance(s, target);
  cross /= k;
  double self = 0;
  for (const Tensor& a : samples)
    for (const Tensor& b : samples) self += rms_distance(a, b);
  self /= 2.0 * k * k;
  return cross - self;
}

double lsd(const std::vector<Tensor>& samples, const Tensor& target) {
  if (samples.empty()) throw std::invalid_argument("lsd: need K >= 1");
  Tensor st = fft2_power(target);
  double beta = std::accumulate(st.data.begin(), st.data.end(), 0.0) /
                static_cast<double>(st.numel());
  beta = std::max(beta, 1e-12);
  std::vector<double> log_t(st.numel());
  for (std::size_t i = 0; i < st.numel(); ++i) log_t[i] = std::log1p(st.data[i] / beta);
  double acc = 0;
  for (const Tensor& s : samples) {
    Tensor ps = fft2_power(s);
    double mse = 0;
    for (std::size_t i = 0; i < ps.numel(); ++i) {
      double d = std::log1p(ps.data[i] / beta) - log_t[i];
      mse += d * d;
    }
    acc += mse / static_cast<double>(ps.numel());
  }
  return acc / static_cast<double>(samples.size());
}

namespace {

std::vector<std::vector<double>> extract_patches(const Tensor& field,
                                                 const MetricConfig& cfg) {
  if (field.shape.size() != 2)
    throw std::invalid_argument("patch_mmd: expected H x W fields");
  std::size_t h = field.shape[0], w = field.shape[1];
  std::size_t ps = cfg.patch_size;
  if (ps > h || ps > w) throw std::invalid_argument("patch_mmd: patch larger than field");
  std::vector<std::vector<double>> patches;
  for (std::size_t i = 0; i + ps <= h; i += cfg.stride) {
    for (std::size_t j = 0; j + ps <= w; j += cfg.stride) {
      std::vector<double> p(ps * ps);
      for (std::size_t a = 0; a < ps; ++a)
        for (std::size_t b = 0; b < ps; ++b) p[a * ps + b] = field.at(i + a, j + b);
      if (cfg.standardize_patches) {
        double m = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
        double v = 0;
        for (double x : p) v += (x - m) * (x - m) / static_cast<double>(p.size());
        double sd = std::sqrt(v) + 1e-12;
        for (double& x : p) x = (x - m) / sd;
      }
      patches.push_back(std::move(p));
    }
  }
  return patches;
}

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double ss = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    ss += d * d;
  }
  return ss;
}

}  // namespace

double patch_mmd(const std::vector<Tensor>& samples, const Tensor& target,
                 const MetricConfig& cfg) {
  auto a = extract_patches(target, cfg);
  std::vector<std::vector<double>> b;
  for (const Tensor& s : samples) {
    auto sp = extract_patches(s, cfg);
    b.insert(b.end(), std::make_move_iterator(sp.begin()), std::make_move_iterator(sp.end()));
  }
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("patch_mmd: need at least 2 patches per side");

  // median heuristic on the pooled patch set
  std::vector<std::vector<double>> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<double> dists;
  dists.reserve(pooled.size() * (pooled.size() - 1) / 2);
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = i + 1; j < pooled.size(); ++j)
      dists.push_back(std::sqrt(sq_dist(pooled[i], pooled[j])));
  double sigma0 = std::max(median(std::move(dists)), 1e-12);

  const double m = static_cast<double>(a.size());
  const double n = static_cast<double>(b.size());
  double acc = 0;
  for (double mult : cfg.bandwidth_multipliers) {
    double denom = 2.0 * (mult * sigma0) * (mult * sigma0);
    double kaa = 0, kbb = 0, kab = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a.size(); ++j)
        if (i != j) kaa += std::exp(-sq_dist(a[i], a[j]) / denom);
    for (std::size_t i = 0; i < b.size(); ++i)
      for (std::size_t j = 0; j < b.size(); ++j)
        if (i != j) kbb += std::exp(-sq_dist(b[i], b[j]) / denom);
    for (const auto& ai : a)
      for (const auto& bj : b) kab += std::exp(-sq_dist(ai, bj) / denom);
    acc += kaa / (m * (m - 1.0)) + kbb / (n * (n - 1.0)) - 2.0 * kab / (m * n);
  }
  return acc / static_cast<double>(cfg.bandwidth_multipliers.size());
}

double vendi_score(const std::vector<Tensor>& samples) {
  if (samples.empty()) throw std::invalid_argument("vendi: need K >= 1");
  const std::size_t k = samples.size();
  const std::size_t d = samples.front().numel();
  Eigen::MatrixXd x(k, d);
  for (std::size_t i = 0; i < k; ++i) {
    const Tensor& s = samples[i];
    double mean = std::accumulate(s.data.begin(), s.data.end(), 0.0) /
                  static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.data[j] - mean;
    double nrm = x.row(static_cast<Eigen::Index>(i)).norm();
    if (nrm < 1e-300) throw std::invalid_argument("vendi: zero-norm sample vector");
    x.row(static_cast<Eigen::Index>(i)) /= nrm;
  }
  Eigen::MatrixXd sim = x * x.transpose() / static_cast<double>(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sim);
  double entropy = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    double lam = es.eigenvalues()(i);
    if (lam > 1e-15) entropy -= lam * std::log(lam);
  }
  return std::exp(entropy);
}

double vendi_ratio(const std::vector<Tensor>& samples,
                   const std::vector<Tensor>& reference) {
  return vendi_score(samples) / vendi_score(reference);
}

}  // namespace conflow
