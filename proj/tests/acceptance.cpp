// End-to-end acceptance suite. Each numbered check prints one PASS/FAIL line;
// the process exits nonzero if any check fails. Tolerances are pinned here.
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "conflow/bands.hpp"
#include "conflow/calibration.hpp"
#include "conflow/cpd.hpp"
#include "conflow/datagen.hpp"
#include "conflow/experiments.hpp"
#include "conflow/flow.hpp"
#include "conflow/metrics.hpp"
#include "conflow/numerics.hpp"
#include "conflow/repulsion.hpp"
#include "conflow/rng.hpp"
#include "conflow/scores.hpp"

using namespace conflow;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const std::string& what) {
  std::printf("criterion %2d: %s  %s\n", criterion, ok ? "PASS" : "FAIL", what.c_str());
  if (!ok) ++g_failures;
}

Tensor randn(const std::vector<std::size_t>& shape, RngStream& rng) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data) v = rng.normal();
  return t;
}

// --- tiny CSV reader for the benchmark outputs ---

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("missing column " + name);
  }
};

Csv parse_csv(const std::string& text) {
  Csv out;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (first) {
      out.header = std::move(cells);
      first = false;
    } else {
      out.rows.push_back(std::move(cells));
    }
  }
  return out;
}

// --- criterion 1: convergence of the boundary flow across score families ---

struct CellStats {
  double mean_err20 = 0.0;
  double mean_final = 0.0;
};

CellStats run_cell(const Score& score, const std::vector<std::size_t>& shape,
                   double alpha, std::uint64_t seed, std::uint64_t stream_base) {
  const std::size_t n_cal = 500, m_eval = 20;
  RngStream cal_rng(seed, stream_base);
  Tensor yhat = Tensor::zeros(shape);
  std::vector<double> scores(n_cal);
  for (std::size_t i = 0; i < n_cal; ++i) scores[i] = score.eval(yhat, randn(shape, cal_rng));
  double tau = Filtration(scores).threshold(alpha).tau;
  FlowOptions opts;
  CellStats st;
  for (std::size_t m = 0; m < m_eval; ++m) {
    RngStream rng(seed, stream_base + 1 + m);
    Tensor y0 = randn(shape, rng);
    double e20, ef;
    try {
      FlowResult fr = integrate_to_boundary(score, yhat, y0, tau, opts, rng);
      std::size_t k20 = std::min<std::size_t>(opts.steps, fr.score_trace.size() - 1);
      e20 = std::abs(fr.score_trace[k20] - tau);
      ef = std::abs(fr.score_trace.back() - tau);
    } catch (const DegenerateGradient&) {
      e20 = ef = std::abs(score.eval(yhat, y0) - tau);
    }
    st.mean_err20 += e20 / static_cast<double>(m_eval);
    st.mean_final += ef / static_cast<double>(m_eval);
  }
  return st;
}

void criterion_1() {
  auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::size_t> dims = {5, 10, 25, 50, 100};
  const std::vector<double> alphas = {0.05, 0.1, 0.2};
  const std::uint64_t seed = 1;
  std::uint64_t stream = 0;

  double worst_final = 0.0;
  bool smooth_ok = true;

  // residual bank for the fitted vector families
  RngStream bank_rng(seed, 1u << 20);

  for (std::size_t d : dims) {
    ResidualBank bank;
    for (int i = 0; i < 500; ++i) bank.residuals.push_back(randn({d}, bank_rng));
    std::vector<ScorePtr> smooth = {make_l2_score(), make_huber_score(1.0),
                                    fit_gauss_nll(bank), fit_student_t_nll(bank, 3.0)};
    for (const auto& s : smooth) {
      for (double a : alphas) {
        CellStats st = run_cell(*s, {d}, a, seed, stream);
        stream += 64;
        worst_final = std::max(worst_final, st.mean_final);
        if (st.mean_final > 1e-6) smooth_ok = false;
      }
    }
  }
  for (std::size_t p : {std::size_t{8}, std::size_t{16}}) {
    std::vector<ScorePtr> smooth = {make_sobolev_score(), make_psd_score(),
                                    make_wavelet_score(p == 8 ? 2 : 3)};
    for (const auto& s : smooth) {
      for (double a : alphas) {
        CellStats st = run_cell(*s, {p, p}, a, seed, stream);
        stream += 64;
        worst_final = std::max(worst_final, st.mean_final);
        if (st.mean_final > 1e-6) smooth_ok = false;
      }
    }
  }

  // the nonsmooth families are recorded as exceeding the tolerance before the
  // polish stage, matching the fixed 20-step budget
  int flagged = 0, total = 0;
  for (std::size_t d : dims) {
    ResidualBank bank;
    for (int i = 0; i < 500; ++i) bank.residuals.push_back(randn({d}, bank_rng));
    std::vector<ScorePtr> rough = {make_l1_score(), make_knn_score(bank, 10)};
    for (const auto& s : rough) {
      for (double a : alphas) {
        CellStats st = run_cell(*s, {d}, a, seed, stream);
        stream += 64;
        ++total;
        if (st.mean_err20 > 1e-6) ++flagged;
      }
    }
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool rough_ok = 2 * flagged >= total;
  bool budget_ok = secs < 300.0;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "convergence: worst mean final err %.3g (<= 1e-6), nonsmooth flagged "
                "%d/%d, %.1fs (< 300s)",
                worst_final, flagged, total, secs);
  report(1, smooth_ok && rough_ok && budget_ok, buf);
}

void criterion_2() {
  auto s = make_l2_score();
  bool ok = true;
  double worst_slope = 0, worst_r2 = 1;
  for (std::size_t d : {std::size_t{2}, std::size_t{10}, std::size_t{50}}) {
    RngStream rng(11, d);
    Tensor yhat = randn({d}, rng);
    Tensor y0 = randn({d}, rng);
    double s0 = s->eval(yhat, y0);
    double tau = 0.4 * s0;
    FlowOptions opts;
    RngStream frng(12, d);
    FlowResult res = integrate_to_boundary(*s, yhat, y0, tau, opts, frng);
    const double dt = opts.horizon / opts.steps;
    std::vector<double> ts, ls;
    for (int k = 0; k <= opts.steps; ++k) {
      double gap = std::abs(res.score_trace[static_cast<std::size_t>(k)] - tau);
      if (gap <= 0) break;
      ts.push_back(k * dt);
      ls.push_back(std::log(gap));
    }
    double n = static_cast<double>(ts.size());
    double mt = 0, ml = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      mt += ts[i] / n;
      ml += ls[i] / n;
    }
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      sxx += (ts[i] - mt) * (ts[i] - mt);
      sxy += (ts[i] - mt) * (ls[i] - ml);
      syy += (ls[i] - ml) * (ls[i] - ml);
    }
    double slope = sxy / sxx;
    double r2 = (sxy * sxy) / (sxx * syy);
    double rel = std::abs(slope + res.lambda_used) / res.lambda_used;
    worst_slope = std::max(worst_slope, rel);
    worst_r2 = std::min(worst_r2, r2);
    if (rel >= 0.02 || r2 <= 0.99) ok = false;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "exponential decay: max slope error %.4f%% (< 2%%), min R^2 %.5f (> 0.99)",
                100 * worst_slope, worst_r2);
  report(2, ok, buf);
}

void criterion_3() {
  RngStream rng(13, 0);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    double s0 = 20.0 * rng.normal();
    double tau = 20.0 * rng.normal();
    if (std::abs(s0 - tau) <= 1e-6) {
      --k;
      continue;
    }
    double lam = auto_lambda(s0, tau, 1e-6, 1.0);
    worst = std::max(worst, std::abs(hitting_time(s0, tau, 1e-6, lam) - 1.0));
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "hitting time closed loop: max |t - 1| = %.3g (<= 1e-12)",
                worst);
  report(3, worst <= 1e-12, buf);
}

void criterion_4() {
  auto s = make_l2_score();
  RngStream rng(14, 0);
  double worst = 0;
  for (int k = 0; k < 1000; ++k) {
    std::size_t d = 2 + static_cast<std::size_t>(rng.uniform() * 98.0);
    Tensor yhat = randn({d}, rng);
    Tensor y0 = randn({d}, rng);
    double tau = 0.2 + rng.uniform();
    FlowOptions opts;
    RngStream frng(15, static_cast<std::uint64_t>(k));
    FlowResult res = integrate_to_boundary(*s, yhat, y0, tau, opts, frng);
    Tensor dir = y0 - yhat;
    double r = norm(dir);
    if (r < 1e-9) continue;
    Tensor oracle = yhat;
    axpy(tau * std::sqrt(static_cast<double>(d)) / r, dir, oracle);
    // rms deviation: the same normalization the score itself uses
    double err = norm(res.terminal - oracle) / std::sqrt(static_cast<double>(d));
    worst = std::max(worst, err);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "radial oracle: max rms deviation %.3g (<= 1e-6 + 1e-9)",
                worst);
  report(4, worst <= 1e-6 + 1e-9, buf);
}

double grad_rel_error(const Score& s, const Tensor& yhat, const Tensor& y) {
  const double h = 1e-5;
  Tensor g = s.grad(yhat, y);
  Tensor fd = Tensor::zeros(y.shape);
  Tensor yp = y;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    double orig = yp.data[i];
    yp.data[i] = orig + h;
    double up = s.eval(yhat, yp);
    yp.data[i] = orig - h;
    double dn = s.eval(yhat, yp);
    yp.data[i] = orig;
    fd.data[i] = (up - dn) / (2.0 * h);
  }
  return norm(g - fd) / std::max(norm(fd), 1e-12);
}

void criterion_5() {
  RngStream bank_rng(16, 0);
  ResidualBank bank;
  for (int i = 0; i < 40; ++i) bank.residuals.push_back(randn({8}, bank_rng));
  LocalCombinedParams lcp;
  CgtParams cgt;
  struct Fam {
    ScorePtr score;
    std::vector<std::size_t> shape;
  };
  std::vector<Fam> fams = {
      {make_l2_score(), {8}},
      {make_huber_score(0.7), {8}},
      {fit_gauss_nll(bank), {8}},
      {fit_student_t_nll(bank, 4.0), {8}},
      {make_field_l2_score(), {8, 8}},
      {make_sobolev_score(), {8, 8}},
      {make_psd_score(), {8, 8}},
      {make_wavelet_score(3), {8, 8}},
      {make_combo_max_score(0.8, 1.3), {8, 8}},
      {make_local_combined_score(lcp), {8, 8}},
      {make_traj_l2_score(), {12, 2}},
      {make_cgt_score(cgt), {12, 2}},
  };
  double worst = 0;
  std::uint64_t fam_id = 0;
  for (const Fam& f : fams) {
    RngStream rng(17, fam_id++);
    for (int k = 0; k < 100; ++k) {
      Tensor yhat = randn(f.shape, rng);
      Tensor y = randn(f.shape, rng);
      worst = std::max(worst, grad_rel_error(*f.score, yhat, y));
    }
  }
  char buf[128];
  std::snprintf(buf, sizeof buf,
                "gradient suite (12 families x 100 points): max rel err %.3g (< 1e-5)",
                worst);
  report(5, worst < 1e-5, buf);
}

void criterion_6() {
  BenchContext ctx;
  ctx.seed = 1;
  ctx.full_scale = true;  // M = 20000 per mixing measure
  Csv csv = parse_csv(run_cpd_audit(ctx));
  std::size_t ci_pi = csv.col("pi"), ci_beta = csv.col("beta");
  std::size_t ci_emp = csv.col("empirical"), ci_tgt = csv.col("target");
  std::size_t ci_cl = csv.col("clamped_fraction");
  const double m = 20000.0;
  bool unif_ok = true, hi_ok = false, lo_ok = false;
  double worst = -1e300;
  for (const auto& row : csv.rows) {
    double beta = std::stod(row[ci_beta]);
    double emp = std::stod(row[ci_emp]);
    double tgt = std::stod(row[ci_tgt]);
    double cl = std::stod(row[ci_cl]);
    if (row[ci_pi] == "unif01") {
      double bound = 3.0 * std::sqrt(beta * (1.0 - beta) / m);
      worst = std::max(worst, std::abs(emp - tgt) - bound);
      if (std::abs(emp - tgt) > bound) unif_ok = false;
    } else if (row[ci_pi] == "unif_0.9_1" && std::abs(beta - 0.5) < 1e-9) {
      hi_ok = emp == 1.0;
    } else if (row[ci_pi] == "unif_0_0.1" && std::abs(beta - 0.1) < 1e-9) {
      lo_ok = emp <= cl;
    }
  }
  char buf[192];
  std::snprintf(buf, sizeof buf,
                "cpd audit M=20000: unif01 within 3 sigma (margin %.3g), "
                "pi=[.9,1) beta=.5 -> 1, pi=[0,.1) beta=.1 <= clamped",
                -worst);
  report(6, unif_ok && hi_ok && lo_ok, buf);
}

void criterion_7(const std::string& csv_text) {
  Csv csv = parse_csv(csv_text);
  std::size_t ci_ratio = csv.col("ratio"), ci_err = csv.col("max_abs_err");
  bool ok = csv.rows.size() == 4;
  double min_ratio = 1e300, max_err = 0;
  for (const auto& row : csv.rows) {
    min_ratio = std::min(min_ratio, std::stod(row[ci_ratio]));
    max_err = std::max(max_err, std::stod(row[ci_err]));
  }
  ok = ok && min_ratio >= 2.0 && max_err <= 1e-6;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "repulsion: min spread ratio %.2f (>= 2), max |S - tau| %.3g (<= 1e-6)",
                min_ratio, max_err);
  report(7, ok, buf);
}

void criterion_8(const std::string& csv_text) {
  Csv csv = parse_csv(csv_text);
  std::size_t ci_var = csv.col("variant"), ci_m = csv.col("method");
  std::size_t ci_cov = csv.col("coverage");
  bool reconf_ok = true;
  bool asym_raw_ok = false;
  double lo = 1, hi = 0;
  for (const auto& row : csv.rows) {
    double cov = std::stod(row[ci_cov]);
    if (row[ci_m] == "reconf") {
      lo = std::min(lo, cov);
      hi = std::max(hi, cov);
      if (cov < 0.88 || cov > 0.92) reconf_ok = false;
    } else if (row[ci_var] == "asym") {
      asym_raw_ok = cov < 0.88;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "risk bands: reconf coverage in [%.3f, %.3f] (within [0.88, 0.92]), "
                "asym raw undercovers",
                lo, hi);
  report(8, reconf_ok && asym_raw_ok, buf);
}

void criterion_9() {
  bool ok = true;
  // energy distance on a point mass at the target
  Tensor target({1.0}, {1});
  ok = ok && energy_distance({target, target}, target) == 0.0;

  // lsd zero on identical fields and equal to a quadratic-time DFT reference
  RngStream rng(18, 0);
  Tensor f = Tensor::zeros({8, 8});
  for (double& v : f.data) v = rng.normal();
  ok = ok && lsd({f}, f) == 0.0;
  Tensor g = Tensor::zeros({8, 8});
  for (double& v : g.data) v = rng.normal();
  auto power_ref = [](const Tensor& x) {
    std::vector<double> p(64);
    for (std::size_t ki = 0; ki < 8; ++ki)
      for (std::size_t kj = 0; kj < 8; ++kj) {
        std::complex<double> acc = 0;
        for (std::size_t i = 0; i < 8; ++i)
          for (std::size_t j = 0; j < 8; ++j) {
            double ang = -2.0 * std::numbers::pi *
                         (double(ki * i) + double(kj * j)) / 8.0;
            acc += x.at(i, j) * std::complex<double>(std::cos(ang), std::sin(ang));
          }
        p[ki * 8 + kj] = std::norm(acc);
      }
    return p;
  };
  auto pt = power_ref(f), ps = power_ref(g);
  double beta = 0;
  for (double v : pt) beta += v / 64.0;
  double want = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    double d = std::log1p(ps[i] / beta) - std::log1p(pt[i] / beta);
    want += d * d / 64.0;
  }
  ok = ok && std::abs(lsd({g}, f) - want) <= 1e-9;

  // patch mmd unbiasedness over 100 matched-distribution seeds
  double mean = 0, m2 = 0;
  for (int r = 0; r < 100; ++r) {
    RngStream mr(19, static_cast<std::uint64_t>(r));
    Tensor a = Tensor::zeros({16, 16}), b = Tensor::zeros({16, 16});
    for (double& v : a.data) v = mr.normal();
    for (double& v : b.data) v = mr.normal();
    double v = patch_mmd({b}, a);
    double d = v - mean;
    mean += d / (r + 1);
    m2 += d * (v - mean);
  }
  double se = std::sqrt(m2 / 99.0 / 100.0);
  ok = ok && std::abs(mean) <= 3.0 * se;

  // vendi: 1 for identical samples, K for orthogonal ones
  Tensor one = Tensor::zeros({4, 4});
  for (double& v : one.data) v = rng.normal();
  ok = ok && std::abs(vendi_score({one, one, one}) - 1.0) < 1e-9;
  std::vector<Tensor> ortho;
  for (int i = 0; i < 5; ++i) {
    Tensor t = Tensor::zeros({10});
    t.data[2 * i] = 1.0;
    t.data[2 * i + 1] = -1.0;
    ortho.push_back(std::move(t));
  }
  ok = ok && std::abs(vendi_score(ortho) - 5.0) < 1e-9;
  report(9, ok, "metrics sanity: ED, LSD oracle, patch-MMD unbiasedness, Vendi counts");
}

void criterion_10() {
  BenchContext conv{1, false, "acceptance"};
  BenchContext rep{1, false, "acceptance"};
  BenchContext band{2, false, "acceptance"};
  BenchContext audit{1, true, "acceptance"};

  setenv("CONFLOW_THREADS", "3", 1);
  std::string conv_a = run_convergence_bench(conv);
  std::string rep_a = run_repulsion_bench(rep);
  std::string band_a = run_band_bench(band);
  std::string audit_a = run_cpd_audit(audit);
  setenv("CONFLOW_THREADS", "1", 1);
  std::string conv_b = run_convergence_bench(conv);
  std::string rep_b = run_repulsion_bench(rep);
  std::string band_b = run_band_bench(band);
  std::string audit_b = run_cpd_audit(audit);
  unsetenv("CONFLOW_THREADS");

  bool ok = conv_a == conv_b && rep_a == rep_b && band_a == band_b && audit_a == audit_b;
  report(10, ok, "determinism: all four benchmark CSVs bitwise stable across thread counts");

  // reuse the single-thread outputs for the result-based criteria
  criterion_7(rep_b);
  criterion_8(band_b);
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_9();
  criterion_10();  // also evaluates criteria 7 and 8 on its outputs
  if (g_failures == 0) {
    std::printf("acceptance: all criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criteria failed\n", g_failures);
  return 1;
}
