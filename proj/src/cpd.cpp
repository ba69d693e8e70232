#include "conflow/cpd.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "conflow/parallel.hpp"

namespace conflow {

MixingMeasure MixingMeasure::uniform_range(double a, double b) {
  if (!(a < b) || a < 0.0 || b > 1.0)
    throw std::invalid_argument("mixing measure: need 0 <= a < b <= 1");
  MixingMeasure m;
  m.kind = Kind::UniformRange;
  m.a = a;
  m.b = b;
  return m;
}

MixingMeasure MixingMeasure::discrete(std::vector<double> levels,
                                      std::vector<double> masses) {
  if (levels.empty() || levels.size() != masses.size())
    throw std::invalid_argument("mixing measure: levels/masses mismatch");
  double total = std::accumulate(masses.begin(), masses.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("mixing measure: masses must sum to 1");
  for (double l : levels)
    if (!(l > 0.0 && l < 1.0))
      throw std::invalid_argument("mixing measure: support must lie in (0,1)");
  MixingMeasure m;
  m.kind = Kind::DiscreteGrid;
  m.levels = std::move(levels);
  m.masses = std::move(masses);
  return m;
}

double MixingMeasure::upper_mass(double beta) const {
  switch (kind) {
    case Kind::Uniform01:
      return 1.0 - beta;
    case Kind::UniformRange: {
      double lo = std::max(a, beta);
      return lo >= b ? 0.0 : (b - lo) / (b - a);
    }
    case Kind::DiscreteGrid: {
      double m = 0;
      for (std::size_t i = 0; i < levels.size(); ++i)
        if (levels[i] >= beta) m += masses[i];
      return m;
    }
  }
  return 0.0;
}

double sample_alpha(const MixingMeasure& pi, RngStream& rng) {
  switch (pi.kind) {
    case MixingMeasure::Kind::Uniform01:
      return rng.uniform();
    case MixingMeasure::Kind::UniformRange:
      return rng.uniform(pi.a, pi.b);
    case MixingMeasure::Kind::DiscreteGrid: {
      double u = rng.uniform();
      double cum = 0;
      for (std::size_t i = 0; i < pi.levels.size(); ++i) {
        cum += pi.masses[i];
        if (u <= cum) return pi.levels[i];
      }
      return pi.levels.back();
    }
  }
  throw std::logic_error("sample_alpha: unknown measure kind");
}

BaseMeasure BaseMeasure::empirical(std::vector<Tensor> targets, double jitter) {
  if (targets.empty()) throw std::invalid_argument("base measure: empty target bank");
  if (jitter < 0.0) throw std::invalid_argument("base measure: jitter must be >= 0");
  BaseMeasure b;
  b.kind = Kind::EmpiricalCalibration;
  b.bank = std::move(targets);
  b.jitter_sigma = jitter;
  return b;
}

BaseMeasure BaseMeasure::gaussian(double scale) {
  BaseMeasure b;
  b.kind = Kind::GaussianAroundPrediction;
  b.scale = scale;
  return b;
}

BaseMeasure BaseMeasure::provided(std::vector<Tensor> samples) {
  if (samples.empty()) throw std::invalid_argument("base measure: empty sample bank");
  BaseMeasure b;
  b.kind = Kind::ProvidedSamples;
  b.bank = std::move(samples);
  return b;
}

Tensor draw_base(const BaseMeasure& mu, const Tensor& yhat, RngStream& rng) {
  switch (mu.kind) {
    case BaseMeasure::Kind::EmpiricalCalibration: {
      std::size_t idx = static_cast<std::size_t>(rng.next_u64() % mu.bank.size());
      Tensor y0 = mu.bank[idx];
      if (mu.jitter_sigma > 0.0)
        for (double& v : y0.data) v += mu.jitter_sigma * rng.normal();
      return y0;
    }
    case BaseMeasure::Kind::GaussianAroundPrediction: {
      Tensor y0 = yhat;
      for (double& v : y0.data) v += mu.scale * rng.normal();
      return y0;
    }
    case BaseMeasure::Kind::ProvidedSamples: {
      std::size_t idx = static_cast<std::size_t>(rng.next_u64() % mu.bank.size());
      return mu.bank[idx];
    }
  }
  throw std::logic_error("draw_base: unknown measure kind");
}

CpdSampleSet sample_cpd(const CPDSpec& spec, const Tensor& yhat, std::size_t m_samples,
                        std::uint64_t root_seed, std::uint64_t stream_offset) {
  if (m_samples < 1) throw std::invalid_argument("sample_cpd: need M >= 1");
  if (!spec.model) throw std::invalid_argument("sample_cpd: missing score model");
  CpdSampleSet out;
  out.samples.resize(m_samples);
  std::atomic<std::size_t> failures{0};
  parallel_for(m_samples, [&](std::size_t m) {
    RngStream rng(root_seed, stream_offset + m);
    CpdSample& s = out.samples[m];
    s.alpha = sample_alpha(spec.mixing, rng);
    Tensor y0 = draw_base(spec.base, yhat, rng);
    ThresholdResult thr = spec.filtration.threshold(s.alpha);
    s.tau = thr.tau;
    s.clamped = thr.clamped;
    try {
      FlowResult fr = integrate_to_boundary(*spec.model, yhat, y0, s.tau, spec.flow, rng);
      s.value = std::move(fr.terminal);
      s.score = fr.score_trace.back();
      s.converged = fr.converged;
    } catch (const DegenerateGradient&) {
      s.value = std::move(y0);
      s.score = spec.model->eval(yhat, s.value);
      s.converged = false;
      failures.fetch_add(1);
    }
  });
  out.failures = failures.load();
  return out;
}

std::vector<CoverageRow> coverage_audit(const CpdSampleSet& set,
                                        const Filtration& filtration,
                                        const MixingMeasure& pi,
                                        const std::vector<double>& beta_grid,
                                        double eps_slack) {
  std::vector<CoverageRow> rows;
  rows.reserve(beta_grid.size());
  for (double beta : beta_grid) {
    CoverageRow row;
    row.beta = beta;
    row.target = pi.upper_mass(beta);
    double tau_beta = filtration.threshold(beta).tau;
    std::size_t covered = 0, used = 0, clamped = 0;
    for (const CpdSample& s : set.samples) {
      if (s.clamped) {
        ++clamped;
        continue;  // clamped thresholds void the exactness claim
      }
      ++used;
      // a sample exactly on the boundary counts as covered
      if (s.score <= tau_beta + eps_slack) ++covered;
    }
    row.empirical = used > 0 ? static_cast<double>(covered) / static_cast<double>(used) : 0.0;
    row.clamped_fraction =
        set.samples.empty() ? 0.0
                            : static_cast<double>(clamped) / static_cast<double>(set.samples.size());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace conflow
