#pragma once

#include <cstdint>
#include <vector>

#include "conflow/calibration.hpp"
#include "conflow/flow.hpp"
#include "conflow/rng.hpp"
#include "conflow/scores.hpp"
#include "conflow/tensor.hpp"

namespace conflow {

// Mixing measure over confidence levels alpha in (0,1).
struct MixingMeasure {
  enum class Kind { Uniform01, UniformRange, DiscreteGrid };
  Kind kind = Kind::Uniform01;
  double a = 0.0, b = 1.0;              // UniformRange
  std::vector<double> levels;           // DiscreteGrid
  std::vector<double> masses;

  static MixingMeasure uniform01() { return {}; }
  static MixingMeasure uniform_range(double a, double b);
  static MixingMeasure discrete(std::vector<double> levels, std::vector<double> masses);

  // pi([beta, 1)) for audits
  double upper_mass(double beta) const;
};

double sample_alpha(const MixingMeasure& pi, RngStream& rng);

// Base measure over flow initial points.
struct BaseMeasure {
  enum class Kind { EmpiricalCalibration, GaussianAroundPrediction, ProvidedSamples };
  Kind kind = Kind::EmpiricalCalibration;
  std::vector<Tensor> bank;  // calibration targets or provided samples
  double jitter_sigma = 0.0; // EmpiricalCalibration jitter
  double scale = 1.0;        // GaussianAroundPrediction

  static BaseMeasure empirical(std::vector<Tensor> targets, double jitter = 0.0);
  static BaseMeasure gaussian(double scale = 1.0);
  static BaseMeasure provided(std::vector<Tensor> samples);
};

Tensor draw_base(const BaseMeasure& mu, const Tensor& yhat, RngStream& rng);

struct CPDSpec {
  ScorePtr model;
  Filtration filtration;
  BaseMeasure base;
  MixingMeasure mixing;
  FlowOptions flow;
};

struct CpdSample {
  Tensor value;
  double alpha = 0.0;
  double tau = 0.0;
  double score = 0.0;   // S at the terminal point
  bool converged = false;
  bool clamped = false; // threshold clamped at the filtration edge
};

struct CpdSampleSet {
  std::vector<CpdSample> samples;
  std::size_t failures = 0;  // flow errors (degenerate gradients exhausted retries)
};

// Algorithm: draw alpha ~ pi and y0 ~ mu, flow y0 to the tau_alpha level set.
// Sample m uses stream_id = stream_offset + m, so output is independent of
// parallel schedule.
CpdSampleSet sample_cpd(const CPDSpec& spec, const Tensor& yhat, std::size_t m_samples,
                        std::uint64_t root_seed, std::uint64_t stream_offset = 0);

struct CoverageRow {
  double beta = 0.0;
  double empirical = 0.0;   // fraction with S <= tau_beta (ties covered)
  double target = 0.0;      // pi([beta, 1))
  double clamped_fraction = 0.0;
};

// Per-beta empirical coverage of the sample bank against the filtration,
// paired with the analytic pi mass. Clamped samples are excluded from the
// empirical fraction but reported.
std::vector<CoverageRow> coverage_audit(const CpdSampleSet& set,
                                        const Filtration& filtration,
                                        const MixingMeasure& pi,
                                        const std::vector<double>& beta_grid,
                                        double eps_slack);

}  // namespace conflow
