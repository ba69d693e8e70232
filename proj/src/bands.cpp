#include "conflow/bands.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "conflow/numerics.hpp"

namespace conflow {

namespace {

// k-th order statistic with k = ceil(level * n) style conformal rank; input
// is modified in place
double order_stat(std::vector<double>& v, long long k) {
  k = std::clamp<long long>(k, 1, static_cast<long long>(v.size()));
  std::nth_element(v.begin(), v.begin() + (k - 1), v.end());
  return v[static_cast<std::size_t>(k - 1)];
}

double side_excess_lo(const Band& b, const std::vector<double>& y, std::size_t j) {
  return std::max((b.lower[j] - b.eta_lo) - y[j], 0.0);
}

double side_excess_hi(const Band& b, const std::vector<double>& y, std::size_t j) {
  return std::max(y[j] - (b.upper[j] + b.eta_hi), 0.0);
}

double min_inflation_excesses(std::vector<double> excesses, double delta) {
  const auto p = static_cast<double>(excesses.size());
  auto k = static_cast<long long>(std::ceil((1.0 - delta) * p));
  if (k < 1) return 0.0;
  return std::max(order_stat(excesses, k), 0.0);
}

}  // namespace

Band envelope(const std::vector<std::vector<double>>& samples, double lo_q, double hi_q) {
  if (samples.size() < 2) throw std::invalid_argument("envelope: need M >= 2 samples");
  if (!(lo_q > 0.0 && lo_q < hi_q && hi_q < 1.0))
    throw std::invalid_argument("envelope: need 0 < lo_q < hi_q < 1");
  const std::size_t p = samples.front().size();
  for (const auto& s : samples)
    if (s.size() != p) throw std::invalid_argument("envelope: ragged sample bank");
  Band band;
  band.lower.resize(p);
  band.upper.resize(p);
  std::vector<double> col(samples.size());
  std::vector<double> w(samples.size(), 1.0);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t m = 0; m < samples.size(); ++m) col[m] = samples[m][j];
    band.lower[j] = weighted_quantile(col, w, lo_q);
    band.upper[j] = weighted_quantile(col, w, hi_q);
  }
  return band;
}

double pointwise_risk(const Band& band, const std::vector<double>& y, double eta) {
  if (y.size() != band.lower.size())
    throw std::invalid_argument("pointwise_risk: shape mismatch");
  std::size_t outside = 0;
  for (std::size_t j = 0; j < y.size(); ++j) {
    if (y[j] < band.lower[j] - band.eta_lo - eta ||
        y[j] > band.upper[j] + band.eta_hi + eta)
      ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(y.size());
}

double min_inflation(const Band& band, const std::vector<double>& y, double delta) {
  if (y.size() != band.lower.size())
    throw std::invalid_argument("min_inflation: shape mismatch");
  std::vector<double> excess(y.size());
  for (std::size_t j = 0; j < y.size(); ++j)
    excess[j] = std::max(side_excess_lo(band, y, j), side_excess_hi(band, y, j));
  return min_inflation_excesses(std::move(excess), delta);
}

Inflation calibrate_eta(const std::vector<Band>& bands,
                        const std::vector<std::vector<double>>& targets, double delta,
                        double alpha, InflationMode mode) {
  if (bands.empty() || bands.size() != targets.size())
    throw std::invalid_argument("calibrate_eta: need matching nonempty bands/targets");
  const std::size_t n = bands.size();
  auto conformal_rank = [n](double a) {
    return static_cast<long long>(
        std::ceil((1.0 - a) * static_cast<double>(n + 1)));
  };

  Inflation out;
  if (mode == InflationMode::Symmetric) {
    std::vector<double> etas(n);
    for (std::size_t i = 0; i < n; ++i)
      etas[i] = min_inflation(bands[i], targets[i], delta);
    double eta = order_stat(etas, conformal_rank(alpha));
    out.eta_lo = out.eta_hi = eta;
    return out;
  }

  std::vector<double> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Band& b = bands[i];
    const auto& y = targets[i];
    if (y.size() != b.lower.size())
      throw std::invalid_argument("calibrate_eta: shape mismatch");
    std::vector<double> elo(y.size()), ehi(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) {
      elo[j] = side_excess_lo(b, y, j);
      ehi[j] = side_excess_hi(b, y, j);
    }
    lo[i] = min_inflation_excesses(std::move(elo), delta);
    hi[i] = min_inflation_excesses(std::move(ehi), delta);
  }
  long long k = conformal_rank(alpha / 2.0);
  out.eta_lo = order_stat(lo, k);
  out.eta_hi = order_stat(hi, k);
  return out;
}

}  // namespace conflow
