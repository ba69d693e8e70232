#pragma once

#include <vector>

#include "conflow/tensor.hpp"

namespace conflow {

// Coordinatewise prediction band over p grid points.
struct Band {
  std::vector<double> lower;  // l0
  std::vector<double> upper;  // u0
  double eta_lo = 0.0;
  double eta_hi = 0.0;
};

// Pointwise empirical quantiles (lo_q, hi_q) of an M x p sample bank.
Band envelope(const std::vector<std::vector<double>>& samples, double lo_q, double hi_q);

// Fraction of grid points outside [l - eta_lo_extra, u + eta_hi_extra] with a
// symmetric extra inflation eta on both sides.
double pointwise_risk(const Band& band, const std::vector<double>& y, double eta);

// Smallest eta >= 0 with pointwise_risk <= delta: the ceil((1-delta)p)-th
// smallest per-coordinate excess max(l_j - y_j, y_j - u_j, 0).
double min_inflation(const Band& band, const std::vector<double>& y, double delta);

enum class InflationMode { Symmetric, Asymmetric };

struct Inflation {
  double eta_lo = 0.0;
  double eta_hi = 0.0;
};

// Conformal (k = ceil((1-alpha)(n+1)) order statistic) calibration of the
// inflation over per-sample minimal inflations. Asymmetric mode calibrates
// lower and upper excesses separately at alpha/2 each.
Inflation calibrate_eta(const std::vector<Band>& bands,
                        const std::vector<std::vector<double>>& targets, double delta,
                        double alpha, InflationMode mode);

}  // namespace conflow
