#include "conflow/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "conflow/bands.hpp"
#include "conflow/calibration.hpp"
#include "conflow/cpd.hpp"
#include "conflow/datagen.hpp"
#include "conflow/flow.hpp"
#include "conflow/metrics.hpp"
#include "conflow/numerics.hpp"
#include "conflow/parallel.hpp"
#include "conflow/repulsion.hpp"
#include "conflow/scores.hpp"

namespace conflow {

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

constexpr double kTol = 1e-6;

ResidualBank residuals_of(const DataSplit& split, const LinearPredictor& lp) {
  ResidualBank bank;
  bank.residuals.reserve(split.y.size());
  for (std::size_t i = 0; i < split.y.size(); ++i) {
    Tensor yhat = lp.predict(split.x[i], split.y[i].shape);
    Tensor r = split.y[i];
    for (std::size_t k = 0; k < r.numel(); ++k) r.data[k] -= yhat.data[k];
    bank.residuals.push_back(std::move(r));
  }
  return bank;
}

std::vector<double> calibration_scores(const Score& score, const DataSplit& split,
                                       const LinearPredictor& lp) {
  std::vector<double> s(split.y.size());
  parallel_for(split.y.size(), [&](std::size_t i) {
    Tensor yhat = lp.predict(split.x[i], split.y[i].shape);
    s[i] = score.eval(yhat, split.y[i]);
  });
  return s;
}

double min_pairwise_distance(const std::vector<Tensor>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      double d = 0;
      for (std::size_t k = 0; k < pts[i].numel(); ++k) {
        double e = pts[i].data[k] - pts[j].data[k];
        d += e * e;
      }
      best = std::min(best, std::sqrt(d));
    }
  return best;
}

struct ConvCellResult {
  double mean_log10_err20 = 0.0;
  double mean_final_err = 0.0;
  bool exceeds_tol = false;
  double vendi = 0.0;
};

// one (score family, alpha) cell: flow test targets to the boundary and
// record the score error after the fixed 20 steps and after polish
ConvCellResult run_conv_cell(const Score& score, const Dataset& ds,
                             const LinearPredictor& lp, const Filtration& filt,
                             double alpha, std::size_t m_eval, std::uint64_t seed,
                             std::uint64_t stream_base) {
  double tau = filt.threshold(alpha).tau;
  FlowOptions opts;
  std::vector<double> err20(m_eval), err_final(m_eval);
  std::vector<Tensor> terminals(m_eval);
  parallel_for(m_eval, [&](std::size_t m) {
    RngStream rng(seed, stream_base + m);
    std::size_t i = m % ds.test.y.size();
    Tensor yhat = lp.predict(ds.test.x[i], ds.test.y[i].shape);
    try {
      FlowResult fr = integrate_to_boundary(score, yhat, ds.test.y[i], tau, opts, rng);
      std::size_t k20 = std::min<std::size_t>(opts.steps, fr.score_trace.size() - 1);
      err20[m] = std::abs(fr.score_trace[k20] - tau);
      err_final[m] = std::abs(fr.score_trace.back() - tau);
      terminals[m] = std::move(fr.terminal);
    } catch (const DegenerateGradient&) {
      err20[m] = err_final[m] = std::abs(score.eval(yhat, ds.test.y[i]) - tau);
      terminals[m] = ds.test.y[i];
    } catch (const NonFinite&) {
      err20[m] = err_final[m] = std::abs(score.eval(yhat, ds.test.y[i]) - tau);
      terminals[m] = ds.test.y[i];
    }
  });
  ConvCellResult out;
  double sum_log = 0, sum_final = 0, sum20 = 0;
  for (std::size_t m = 0; m < m_eval; ++m) {
    sum_log += std::log10(std::max(err20[m], 1e-300));
    sum20 += err20[m];
    sum_final += err_final[m];
  }
  out.mean_log10_err20 = sum_log / static_cast<double>(m_eval);
  out.mean_final_err = sum_final / static_cast<double>(m_eval);
  out.exceeds_tol = (sum20 / static_cast<double>(m_eval)) > kTol;
  std::vector<Tensor> ref(ds.test.y.begin(),
                          ds.test.y.begin() + static_cast<std::ptrdiff_t>(m_eval));
  out.vendi = vendi_ratio(terminals, ref);
  return out;
}

struct FamilySpec {
  std::string name;
  ScorePtr score;
};

std::vector<FamilySpec> vector_families(const ResidualBank& train_res) {
  std::vector<FamilySpec> fams;
  fams.push_back({"l2", make_l2_score()});
  fams.push_back({"l1", make_l1_score()});
  fams.push_back({"huber", make_huber_score(1.0)});
  fams.push_back({"knn", make_knn_score(train_res, 10)});
  fams.push_back({"gauss_nll", fit_gauss_nll(train_res)});
  fams.push_back({"student_t_nll", fit_student_t_nll(train_res, 3.0)});
  return fams;
}

std::vector<FamilySpec> field_families() {
  std::vector<FamilySpec> fams;
  fams.push_back({"field_l2", make_field_l2_score()});
  fams.push_back({"sobolev", make_sobolev_score()});
  fams.push_back({"psd", make_psd_score()});
  fams.push_back({"wavelet", make_wavelet_score()});
  return fams;
}

}  // namespace

std::string run_convergence_bench(const BenchContext& ctx) {
  const std::vector<double> alphas = {0.05, 0.1, 0.2};
  const std::vector<std::size_t> dims =
      ctx.full_scale ? std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90, 100}
                     : std::vector<std::size_t>{5, 10, 25, 50, 100};
  const std::vector<double> length_scales = {0.1, 0.15, 0.2};
  const std::size_t n = ctx.full_scale ? 1000 : 500;
  const std::size_t n_field = ctx.full_scale ? 500 : 200;
  const std::size_t p_field = ctx.full_scale ? 64 : 32;
  const std::size_t m_eval = ctx.full_scale ? 100 : 20;

  std::ostringstream csv;
  csv << "task,score,dim_or_l,alpha,mean_log10_err20,mean_final_err,exceeds_tol,"
         "vendi_ratio,config_hash,seed\n";
  std::uint64_t stream_base = 1u << 20;
  std::uint64_t data_seed = ctx.seed;

  auto emit = [&](const std::string& task, const std::string& fam, double dim_or_l,
                  double alpha, const ConvCellResult& r) {
    csv << task << ',' << fam << ',' << format_g17(dim_or_l) << ','
        << format_g17(alpha) << ',' << format_g17(r.mean_log10_err20) << ','
        << format_g17(r.mean_final_err) << ',' << (r.exceeds_tol ? 1 : 0) << ','
        << format_g17(r.vendi) << ',' << ctx.config_hash << ',' << ctx.seed << '\n';
  };

  for (const std::string& task : {std::string("iso_gauss"), std::string("aniso_t")}) {
    for (std::size_t p : dims) {
      ++data_seed;
      Dataset ds = task == "iso_gauss" ? gen_linear_gaussian(p, n, data_seed)
                                       : gen_linear_student_t(p, n, data_seed);
      LinearPredictor lp = fit_ridge(ds.train, 1e-3);
      ResidualBank train_res = residuals_of(ds.train, lp);
      for (const FamilySpec& fam : vector_families(train_res)) {
        Filtration filt(calibration_scores(*fam.score, ds.cal, lp));
        for (double alpha : alphas) {
          ConvCellResult r = run_conv_cell(*fam.score, ds, lp, filt, alpha, m_eval,
                                           ctx.seed, stream_base);
          stream_base += m_eval;
          emit(task, fam.name, static_cast<double>(p), alpha, r);
        }
      }
    }
  }

  for (const std::string& task : {std::string("gp2d"), std::string("gp2d_down")}) {
    for (double l : length_scales) {
      ++data_seed;
      Dataset ds = task == "gp2d"
                       ? gen_gp2d(n_field, p_field, 0.15, l, 0.6, data_seed)
                       : gen_gp2d_downscale(n_field, p_field, 8, 0.15, l, 0.6, data_seed);
      LinearPredictor lp = fit_ridge(ds.train, 1e-3);
      for (const FamilySpec& fam : field_families()) {
        Filtration filt(calibration_scores(*fam.score, ds.cal, lp));
        for (double alpha : alphas) {
          ConvCellResult r = run_conv_cell(*fam.score, ds, lp, filt, alpha, m_eval,
                                           ctx.seed, stream_base);
          stream_base += m_eval;
          emit(task, fam.name, l, alpha, r);
        }
      }
    }
  }
  return csv.str();
}

std::string run_repulsion_bench(const BenchContext& ctx) {
  const std::vector<std::size_t> ps = {10, 25, 50, 100};
  const std::size_t n_points = ctx.full_scale ? 1000 : 200;
  const std::size_t n_cal = ctx.full_scale ? 1000 : 500;
  const std::size_t sims = ctx.full_scale ? 25 : 5;
  const double alpha = 0.1;
  ScorePtr score = make_l2_score();
  FlowOptions flow_opts;
  RepulsionOptions rep_opts;  // K = 50, delta = 0.1

  std::ostringstream csv;
  csv << "p,naive_min_nn,repulsed_min_nn,ratio,max_abs_err,config_hash,seed\n";
  std::uint64_t stream_base = 1;
  for (std::size_t p : ps) {
    std::vector<double> naive_d(sims), rep_d(sims), max_err(sims);
    std::uint64_t base = stream_base;
    stream_base += sims;
    parallel_for(sims, [&](std::size_t sim) {
      RngStream rng(ctx.seed, base + sim);
      Tensor yhat = Tensor::zeros({p});
      const double mu = std::sqrt(static_cast<double>(p));
      auto draw = [&]() {
        Tensor t = Tensor::zeros({p});
        for (double& v : t.data) v = mu + rng.normal();
        return t;
      };
      std::vector<double> cal(n_cal);
      for (std::size_t i = 0; i < n_cal; ++i) cal[i] = score->eval(yhat, draw());
      Filtration filt(std::move(cal));
      double tau = filt.threshold(alpha).tau;
      std::vector<Tensor> naive(n_points);
      for (std::size_t i = 0; i < n_points; ++i) {
        FlowResult fr = integrate_to_boundary(*score, yhat, draw(), tau, flow_opts, rng);
        naive[i] = std::move(fr.terminal);
      }
      std::vector<Tensor> rep =
          repulse(naive, *score, yhat, tau, rep_opts, flow_opts, rng);
      naive_d[sim] = min_pairwise_distance(naive);
      rep_d[sim] = min_pairwise_distance(rep);
      double worst = 0;
      for (const Tensor& y : rep)
        worst = std::max(worst, std::abs(score->eval(yhat, y) - tau));
      max_err[sim] = worst;
    });
    double nav = 0, rp = 0, err = 0;
    for (std::size_t s = 0; s < sims; ++s) {
      nav += naive_d[s] / static_cast<double>(sims);
      rp += rep_d[s] / static_cast<double>(sims);
      err = std::max(err, max_err[s]);
    }
    csv << p << ',' << format_g17(nav) << ',' << format_g17(rp) << ','
        << format_g17(rp / nav) << ',' << format_g17(err) << ',' << ctx.config_hash
        << ',' << ctx.seed << '\n';
  }
  return csv.str();
}

namespace {

Band band_from_cpd(const CPDSpec& spec, const Tensor& yhat, std::size_t m_samples,
                   std::uint64_t seed, std::uint64_t stream_offset) {
  CpdSampleSet set = sample_cpd(spec, yhat, m_samples, seed, stream_offset);
  std::vector<std::vector<double>> rows;
  rows.reserve(set.samples.size());
  for (const CpdSample& s : set.samples) rows.push_back(s.value.data);
  return envelope(rows, 0.05, 0.95);
}

}  // namespace

std::string run_band_bench(const BenchContext& ctx) {
  const std::size_t n = 500;
  const std::size_t p = 256;
  const std::size_t m_samples = ctx.full_scale ? 100 : 40;
  const double alpha = 0.1;
  const double delta = 0.0;
  struct V {
    Gp1dVariant variant;
    const char* name;
  };
  const V variants[] = {{Gp1dVariant::Symmetric, "symm"},
                        {Gp1dVariant::Asym, "asym"},
                        {Gp1dVariant::BiasMu, "bias_mu"},
                        {Gp1dVariant::BiasMuSigma, "bias_mu_sigma"}};

  std::ostringstream csv;
  csv << "variant,variant_id,method,coverage,median_width,eta,config_hash,seed\n";
  std::uint64_t vseed = ctx.seed;
  int variant_id = 0;
  for (const V& v : variants) {
    Dataset ds = gen_gp1d(n, p, 0.2, 0.2, 0.6, v.variant, vseed + 11);
    Dataset ds2 = gen_gp1d(n, p, 0.2, 0.2, 0.6, v.variant, vseed + 29);
    const DataSplit& recal = ds2.cal;
    vseed += 101;
    LinearPredictor lp = fit_ridge(ds.train, 1e-3);
    ScorePtr score = make_l2_score();
    CPDSpec spec{score, Filtration(calibration_scores(*score, ds.cal, lp)),
                 BaseMeasure::empirical(ds.cal.y), MixingMeasure::uniform01(),
                 FlowOptions{}};

    std::vector<Band> recal_bands(n);
    std::vector<std::vector<double>> recal_targets(n);
    parallel_for(n, [&](std::size_t i) {
      Tensor yhat = lp.predict(recal.x[i], recal.y[i].shape);
      recal_bands[i] = band_from_cpd(spec, yhat, m_samples, ctx.seed,
                                     (1u << 22) + i * m_samples);
      recal_targets[i] = recal.y[i].data;
    });
    Inflation eta = calibrate_eta(recal_bands, recal_targets, delta, alpha,
                                  InflationMode::Symmetric);

    std::vector<int> raw_cov(n), conf_cov(n);
    std::vector<double> raw_width(n), conf_width(n);
    parallel_for(n, [&](std::size_t j) {
      Tensor yhat = lp.predict(ds.test.x[j], ds.test.y[j].shape);
      Band band = band_from_cpd(spec, yhat, m_samples, ctx.seed,
                                (1u << 26) + j * m_samples);
      raw_cov[j] = pointwise_risk(band, ds.test.y[j].data, 0.0) <= delta;
      Band inflated = band;
      inflated.eta_lo = eta.eta_lo;
      inflated.eta_hi = eta.eta_hi;
      conf_cov[j] = pointwise_risk(inflated, ds.test.y[j].data, 0.0) <= delta;
      std::vector<double> w(p), wi(p);
      for (std::size_t c = 0; c < p; ++c) {
        w[c] = band.upper[c] - band.lower[c];
        wi[c] = w[c] + eta.eta_lo + eta.eta_hi;
      }
      raw_width[j] = median(std::move(w));
      conf_width[j] = median(std::move(wi));
    });
    auto frac = [n](const std::vector<int>& v) {
      double s = 0;
      for (int x : v) s += x;
      return s / static_cast<double>(n);
    };
    csv << v.name << ',' << variant_id << ",sample," << format_g17(frac(raw_cov))
        << ',' << format_g17(median(std::move(raw_width))) << ',' << format_g17(0.0)
        << ',' << ctx.config_hash << ',' << ctx.seed << '\n';
    csv << v.name << ',' << variant_id << ",reconf," << format_g17(frac(conf_cov))
        << ',' << format_g17(median(std::move(conf_width))) << ','
        << format_g17(eta.eta_lo + eta.eta_hi) << ',' << ctx.config_hash << ','
        << ctx.seed << '\n';
    ++variant_id;
  }
  return csv.str();
}

std::string run_cpd_audit(const BenchContext& ctx) {
  const std::size_t n = 500;
  const std::size_t p = 10;
  const std::size_t m_samples = ctx.full_scale ? 20000 : 2000;
  const std::vector<double> betas = {0.1, 0.3, 0.5, 0.7, 0.9};

  Dataset ds = gen_linear_gaussian(p, n, ctx.seed + 3);
  LinearPredictor lp = fit_ridge(ds.train, 1e-3);
  ScorePtr score = make_l2_score();
  Filtration filt(calibration_scores(*score, ds.cal, lp));
  Tensor yhat = lp.predict(ds.test.x[0], ds.test.y[0].shape);

  struct P {
    MixingMeasure pi;
    const char* name;
  };
  const P pis[] = {{MixingMeasure::uniform01(), "unif01"},
                   {MixingMeasure::uniform_range(0.0, 0.1), "unif_0_0.1"},
                   {MixingMeasure::uniform_range(0.9, 1.0), "unif_0.9_1"}};

  std::ostringstream csv;
  csv << "pi,beta,empirical,target,clamped_fraction,config_hash,seed\n";
  std::uint64_t offset = 1u << 24;
  for (const P& pc : pis) {
    CPDSpec spec{score, filt, BaseMeasure::empirical(ds.cal.y), pc.pi, FlowOptions{}};
    CpdSampleSet set = sample_cpd(spec, yhat, m_samples, ctx.seed, offset);
    offset += m_samples;
    for (const CoverageRow& row : coverage_audit(set, filt, pc.pi, betas, 1e-9)) {
      csv << pc.name << ',' << format_g17(row.beta) << ',' << format_g17(row.empirical)
          << ',' << format_g17(row.target) << ',' << format_g17(row.clamped_fraction)
          << ',' << ctx.config_hash << ',' << ctx.seed << '\n';
    }
  }
  return csv.str();
}

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::string render_line_svg(const std::string& csv, const std::string& x_col,
                            const std::string& y_col, const std::string& series_col,
                            const std::string& title) {
  auto rows = parse_csv(csv);
  if (rows.size() < 2) throw std::invalid_argument("render_line_svg: empty csv");
  const auto& header = rows.front();
  auto col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::invalid_argument("render_line_svg: missing column " + name);
  };
  std::size_t xi = col(x_col), yi = col(y_col), si = col(series_col);

  std::map<std::string, std::vector<std::pair<double, double>>> series;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    double x = std::strtod(rows[r][xi].c_str(), nullptr);
    double y = std::strtod(rows[r][yi].c_str(), nullptr);
    if (!std::isfinite(x) || !std::isfinite(y)) continue;
    series[rows[r][si]].push_back({x, y});
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (series.empty()) throw std::invalid_argument("render_line_svg: no numeric rows");
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  const double w = 640, h = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
  const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\""
      << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  svg << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml << "\" y=\"" << h - mb + 18
      << "\" font-size=\"11\" text-anchor=\"middle\">" << format_g17(xmin)
      << "</text>\n";
  svg << "<text x=\"" << w - mr << "\" y=\"" << h - mb + 18
      << "\" font-size=\"11\" text-anchor=\"middle\">" << format_g17(xmax)
      << "</text>\n";
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << h - mb
      << "\" font-size=\"11\" text-anchor=\"end\">" << format_g17(ymin) << "</text>\n";
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
      << "\" font-size=\"11\" text-anchor=\"end\">" << format_g17(ymax) << "</text>\n";
  svg << "<text x=\"" << (w + ml) / 2 << "\" y=\"" << h - 12
      << "\" font-size=\"12\" text-anchor=\"middle\">" << x_col << "</text>\n";

  std::size_t idx = 0;
  double legend_y = mt + 6;
  for (auto& [name, pts] : series) {
    std::sort(pts.begin(), pts.end());
    const char* color = palette[idx % 10];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) svg << px(x) << ',' << py(y) << ' ';
    svg << "\"/>\n";
    for (const auto& [x, y] : pts)
      svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"2.5\" fill=\""
          << color << "\"/>\n";
    svg << "<text x=\"" << w - mr - 4 << "\" y=\"" << legend_y
        << "\" font-size=\"11\" text-anchor=\"end\" fill=\"" << color << "\">" << name
        << "</text>\n";
    legend_y += 14;
    ++idx;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace conflow
