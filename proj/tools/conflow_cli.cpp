// conflow: score-controlled boundary sampling, conformal predictive
// distributions, risk bands and the matching benchmark suite.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "conflow/bands.hpp"
#include "conflow/calibration.hpp"
#include "conflow/cpd.hpp"
#include "conflow/datagen.hpp"
#include "conflow/experiments.hpp"
#include "conflow/flow.hpp"
#include "conflow/metrics.hpp"
#include "conflow/numerics.hpp"
#include "conflow/parallel.hpp"
#include "conflow/repulsion.hpp"
#include "conflow/scores.hpp"
#include "conflow/tensor_io.hpp"

namespace fs = std::filesystem;
using conflow::Tensor;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  bool full_scale = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
  auto* opt = cmd->add_option("--config", args.config_path, "JSON config file");
  if (needs_config) opt->required();
  cmd->add_option("--seed", args.seed, "root RNG seed");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_flag("--full-scale", args.full_scale, "restore the full experiment grids");
}

json load_config(const CommonArgs& args, std::string& raw_text) {
  if (args.config_path.empty()) {
    raw_text = "{}";
    return json::object();
  }
  std::ifstream in(args.config_path);
  if (!in) throw std::runtime_error("cannot open config " + args.config_path);
  std::ostringstream ss;
  ss << in.rdbuf();
  raw_text = ss.str();
  return json::parse(raw_text);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << text;
}

// Banks are stored as one tensor whose first dimension indexes rows.
std::vector<Tensor> bank_rows(const Tensor& bank) {
  if (bank.shape.size() < 2) throw std::runtime_error("bank tensor needs ndim >= 2");
  std::size_t n = bank.shape[0];
  std::vector<std::size_t> row_shape(bank.shape.begin() + 1, bank.shape.end());
  std::size_t stride = Tensor::numel_of(row_shape);
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d(bank.data.begin() + static_cast<std::ptrdiff_t>(i * stride),
                          bank.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    rows.emplace_back(std::move(d), row_shape);
  }
  return rows;
}

Tensor rows_bank(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::runtime_error("empty bank");
  std::vector<std::size_t> shape;
  shape.push_back(rows.size());
  for (std::size_t d : rows.front().shape) shape.push_back(d);
  Tensor bank = Tensor::zeros(shape);
  std::size_t stride = rows.front().numel();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].numel() != stride) throw std::runtime_error("ragged bank");
    std::copy(rows[i].data.begin(), rows[i].data.end(),
              bank.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return bank;
}

conflow::ResidualBank residual_bank_from(const json& score_cfg) {
  conflow::ResidualBank bank;
  std::string path = score_cfg.at("residuals").get<std::string>();
  bank.residuals = bank_rows(conflow::read_tensor(path));
  return bank;
}

conflow::ScorePtr score_from_json(const json& cfg) {
  std::string family = cfg.at("family").get<std::string>();
  if (family == "l2") return conflow::make_l2_score();
  if (family == "l1") return conflow::make_l1_score();
  if (family == "huber") return conflow::make_huber_score(cfg.value("delta", 1.0));
  if (family == "knn")
    return conflow::make_knn_score(residual_bank_from(cfg), cfg.value("k", 10));
  if (family == "gauss_nll") return conflow::fit_gauss_nll(residual_bank_from(cfg));
  if (family == "student_t_nll")
    return conflow::fit_student_t_nll(residual_bank_from(cfg), cfg.value("nu", 3.0));
  if (family == "field_l2") return conflow::make_field_l2_score();
  if (family == "sobolev")
    return conflow::make_sobolev_score(cfg.value("lambda", 1.0));
  if (family == "psd") return conflow::make_psd_score();
  if (family == "wavelet") return conflow::make_wavelet_score(cfg.value("depth", 3));
  if (family == "combo_max")
    return conflow::make_combo_max_score(cfg.value("kappa_sob", 1.0),
                                         cfg.value("kappa_psd", 1.0),
                                         cfg.value("lambda", 1.0));
  if (family == "local_combined") {
    conflow::LocalCombinedParams p;
    p.kappa_l2 = cfg.value("kappa_l2", 1.0);
    p.kappa_spec = cfg.value("kappa_spec", 1.0);
    p.w_l2 = cfg.value("w_l2", 10.0);
    p.w_spec = cfg.value("w_spec", 1.0);
    return conflow::make_local_combined_score(p);
  }
  if (family == "traj_l2") return conflow::make_traj_l2_score();
  if (family == "cgt") {
    conflow::CgtParams p;
    if (cfg.contains("weights")) p.weights = cfg["weights"].get<std::vector<double>>();
    if (cfg.contains("kappas")) p.kappas = cfg["kappas"].get<std::vector<double>>();
    return conflow::make_cgt_score(p);
  }
  throw std::runtime_error("unknown score family: " + family);
}

conflow::FlowOptions flow_from_json(const json& cfg) {
  conflow::FlowOptions o;
  if (!cfg.contains("flow")) return o;
  const json& f = cfg["flow"];
  o.steps = f.value("steps", o.steps);
  o.horizon = f.value("horizon", o.horizon);
  o.tolerance = f.value("tolerance", o.tolerance);
  o.max_polish_steps = f.value("max_polish_steps", o.max_polish_steps);
  return o;
}

conflow::MixingMeasure mixing_from_json(const json& cfg) {
  if (!cfg.contains("mixing")) return conflow::MixingMeasure::uniform01();
  const json& m = cfg["mixing"];
  std::string kind = m.value("kind", "uniform01");
  if (kind == "uniform01") return conflow::MixingMeasure::uniform01();
  if (kind == "uniform_range")
    return conflow::MixingMeasure::uniform_range(m.at("a").get<double>(),
                                                 m.at("b").get<double>());
  if (kind == "discrete")
    return conflow::MixingMeasure::discrete(m.at("levels").get<std::vector<double>>(),
                                            m.at("masses").get<std::vector<double>>());
  throw std::runtime_error("unknown mixing kind: " + kind);
}

conflow::BaseMeasure base_from_json(const json& cfg, const Tensor& /*yhat*/) {
  if (!cfg.contains("base")) throw std::runtime_error("config needs a base measure");
  const json& b = cfg["base"];
  std::string kind = b.at("kind").get<std::string>();
  if (kind == "empirical")
    return conflow::BaseMeasure::empirical(
        bank_rows(conflow::read_tensor(b.at("targets").get<std::string>())),
        b.value("jitter", 0.0));
  if (kind == "gaussian") return conflow::BaseMeasure::gaussian(b.value("scale", 1.0));
  if (kind == "provided")
    return conflow::BaseMeasure::provided(
        bank_rows(conflow::read_tensor(b.at("samples").get<std::string>())));
  throw std::runtime_error("unknown base kind: " + kind);
}

void write_split(const fs::path& dir, const std::string& tag,
                 const conflow::DataSplit& split) {
  conflow::write_tensor((dir / (tag + "_x.ncf")).string(), rows_bank(split.x));
  conflow::write_tensor((dir / (tag + "_y.ncf")).string(), rows_bank(split.y));
}

int cmd_datagen(const CommonArgs& args) {
  std::string raw;
  json cfg = load_config(args, raw);
  std::string gen = cfg.at("generator").get<std::string>();
  conflow::Dataset ds;
  if (gen == "linear_gaussian") {
    ds = conflow::gen_linear_gaussian(cfg.value("p", 10), cfg.value("n", 500), args.seed);
  } else if (gen == "linear_student_t") {
    ds = conflow::gen_linear_student_t(cfg.value("p", 10), cfg.value("n", 500), args.seed);
  } else if (gen == "gp1d") {
    std::string variant = cfg.value("variant", "symmetric");
    conflow::Gp1dVariant v = conflow::Gp1dVariant::Symmetric;
    if (variant == "asym") v = conflow::Gp1dVariant::Asym;
    else if (variant == "bias_mu") v = conflow::Gp1dVariant::BiasMu;
    else if (variant == "bias_mu_sigma") v = conflow::Gp1dVariant::BiasMuSigma;
    else if (variant != "symmetric")
      throw std::runtime_error("unknown gp1d variant: " + variant);
    ds = conflow::gen_gp1d(cfg.value("n", 500), cfg.value("p", 256),
                           cfg.value("lx", 0.2), cfg.value("ly", 0.2),
                           cfg.value("beta", 0.6), v, args.seed);
  } else if (gen == "gp2d") {
    ds = conflow::gen_gp2d(cfg.value("n", 200), cfg.value("p", 64),
                           cfg.value("lx", 0.15), cfg.value("ly", 0.15),
                           cfg.value("beta", 0.6), args.seed);
  } else if (gen == "gp2d_downscale") {
    ds = conflow::gen_gp2d_downscale(cfg.value("n", 200), cfg.value("p", 64),
                                     cfg.value("q", 8), cfg.value("lx", 0.15),
                                     cfg.value("ly", 0.15), cfg.value("beta", 0.6),
                                     args.seed);
  } else if (gen == "trajectories") {
    ds = conflow::gen_trajectories(cfg.value("n", 500), cfg.value("T", 36),
                                   cfg.value("noise_sigma", 0.5), args.seed);
  } else {
    throw std::runtime_error("unknown generator: " + gen);
  }
  fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_split(dir, "train", ds.train);
  write_split(dir, "cal", ds.cal);
  write_split(dir, "test", ds.test);
  std::cout << "wrote dataset (" << gen << ") to " << dir.string() << "\n";
  return 0;
}

int cmd_calibrate(const CommonArgs& args) {
  std::string raw;
  json cfg = load_config(args, raw);
  conflow::ScorePtr score = score_from_json(cfg.at("score"));
  auto yhat = bank_rows(conflow::read_tensor(cfg.at("yhat").get<std::string>()));
  auto y = bank_rows(conflow::read_tensor(cfg.at("y").get<std::string>()));
  if (yhat.size() != y.size()) throw std::runtime_error("yhat/y bank size mismatch");
  std::vector<double> s(y.size());
  conflow::parallel_for(y.size(), [&](std::size_t i) {
    s[i] = score->eval(yhat[i], y[i]);
  });
  conflow::Filtration filt(s);
  fs::path dir(args.out_dir);
  fs::create_directories(dir);
  Tensor scores_t(filt.sorted_scores(), {filt.size()});
  conflow::write_tensor((dir / "cal_scores.ncf").string(), scores_t);
  std::vector<double> alphas = cfg.value("alphas", std::vector<double>{0.05, 0.1, 0.2});
  std::ostringstream csv;
  csv << "alpha,tau,clamped\n";
  for (double a : alphas) {
    auto thr = filt.threshold(a);
    csv << conflow::format_g17(a) << ',' << conflow::format_g17(thr.tau) << ','
        << (thr.clamped ? 1 : 0) << '\n';
  }
  write_text(dir / "thresholds.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

conflow::Filtration filtration_from_json(const json& cfg) {
  Tensor t = conflow::read_tensor(cfg.at("cal_scores").get<std::string>());
  return conflow::Filtration(t.data);
}

int cmd_sample_boundary(const CommonArgs& args) {
  std::string raw;
  json cfg = load_config(args, raw);
  conflow::ScorePtr score = score_from_json(cfg.at("score"));
  Tensor yhat = conflow::read_tensor(cfg.at("yhat").get<std::string>());
  conflow::Filtration filt = filtration_from_json(cfg);
  double alpha = cfg.at("alpha").get<double>();
  double tau = filt.threshold(alpha).tau;
  conflow::BaseMeasure base = base_from_json(cfg, yhat);
  conflow::FlowOptions opts = flow_from_json(cfg);
  std::size_t m = cfg.value("m", 100);
  std::vector<Tensor> out(m);
  conflow::parallel_for(m, [&](std::size_t i) {
    conflow::RngStream rng(args.seed, i);
    Tensor y0 = conflow::draw_base(base, yhat, rng);
    out[i] = conflow::integrate_to_boundary(*score, yhat, y0, tau, opts, rng).terminal;
  });
  fs::path dir(args.out_dir);
  fs::create_directories(dir);
  conflow::write_tensor((dir / "boundary.ncf").string(), rows_bank(out));
  std::cout << "wrote " << m << " boundary points, tau=" << conflow::format_g17(tau)
            << "\n";
  return 0;
}

int cmd_repulse(const CommonArgs& args) {
  std::string raw;
  json cfg = load_config(args, raw);
  conflow::ScorePtr score = score_from_json(cfg.at("score"));
  Tensor yhat = conflow::read_tensor(cfg.at("yhat").get<std::string>());
  conflow::Filtration filt = filtration_from_json(cfg);
  double tau = filt.threshold(cfg.at("alpha").get<double>()).tau;
  auto pts = bank_rows(conflow::read_tensor(cfg.at("points").get<std::string>()));
  conflow::RepulsionOptions rep;
  rep.steps = cfg.value("K", rep.steps);
  rep.step_size = cfg.value("delta", rep.step_size);
  conflow::FlowOptions opts = flow_from_json(cfg);
  conflow::RngStream rng(args.seed, 0);
  auto out = conflow::repulse(pts, *score, yhat, tau, rep, opts, rng);
  fs::path dir(args.out_dir);
  fs::create_directories(dir);
  conflow::write_tensor((dir / "repulsed.ncf").string(), rows_bank(out));
  std::cout << "repulsed " << out.size() << " points\n";
  return 0;
}

int cmd_sample_cpd(const CommonArgs& args) {
  std::string raw;
  json cfg = load_config(args, raw);
  Tensor yhat = conflow::read_tensor(cfg.at("yhat").get<std::string>());
  conflow::CPDSpec spec{score_from_json(cfg.at("score")), filtration_from_json(cfg),
                        base_from_json(cfg, yhat), mixing_from_json(cfg),
                        flow_from_json(cfg)};
  std::size_t m = cfg.value("m", 1000);
  conflow::CpdSampleSet set = conflow::sample_cpd(spec, yhat, m, args.seed);
  fs::path dir(args.out_dir);
  fs::create_directories(dir);
  std::vector<Tensor> values;
  values.reserve(set.samples.size());
  std::ostringstream csv;
  csv << "alpha,tau,score,converged,clamped\n";
  for (const auto& s : set.samples) {
    values.push_back(s.value);
    csv << conflow::format_g17(s.alpha) << ',' << conflow::format_g17(s.tau) << ','
        << conflow::format_g17(s.score) << ',' << (s.converged ? 1 : 0) << ','
        << (s.clamped ? 1 : 0) << '\n';
  }
  conflow::write_tensor((dir / "cpd_values.ncf").string(), rows_bank(values));
  write_text(dir / "cpd_samples.csv", csv.str());
  std::cout << "drew " << m << " CPD samples (" << set.failures << " flow failures)\n";
  return 0;
}

int cmd_band(const CommonArgs& args) {
  std::string raw;
  json cfg = load_config(args, raw);
  auto rows = bank_rows(conflow::read_tensor(cfg.at("samples").get<std::string>()));
  std::vector<std::vector<double>> flat;
  flat.reserve(rows.size());
  for (const Tensor& r : rows) flat.push_back(r.data);
  conflow::Band band =
      conflow::envelope(flat, cfg.value("lo_q", 0.05), cfg.value("hi_q", 0.95));
  fs::path dir(args.out_dir);
  fs::create_directories(dir);
  conflow::write_tensor((dir / "band_lower.ncf").string(),
                        Tensor(band.lower, {band.lower.size()}));
  conflow::write_tensor((dir / "band_upper.ncf").string(),
                        Tensor(band.upper, {band.upper.size()}));
  std::cout << "wrote envelope over " << flat.size() << " samples\n";
  return 0;
}

int cmd_metrics(const CommonArgs& args) {
  std::string raw;
  json cfg = load_config(args, raw);
  auto samples = bank_rows(conflow::read_tensor(cfg.at("samples").get<std::string>()));
  Tensor target = conflow::read_tensor(cfg.at("target").get<std::string>());
  std::ostringstream csv;
  csv << "metric,value\n";
  csv << "energy_distance," << conflow::format_g17(conflow::energy_distance(samples, target))
      << '\n';
  if (target.shape.size() == 2 && conflow::is_power_of_two(target.shape[0]) &&
      conflow::is_power_of_two(target.shape[1])) {
    csv << "lsd," << conflow::format_g17(conflow::lsd(samples, target)) << '\n';
    conflow::MetricConfig mc;
    mc.patch_size = cfg.value("patch_size", mc.patch_size);
    mc.stride = cfg.value("stride", mc.stride);
    csv << "patch_mmd," << conflow::format_g17(conflow::patch_mmd(samples, target, mc))
        << '\n';
  }
  csv << "vendi," << conflow::format_g17(conflow::vendi_score(samples)) << '\n';
  fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_text(dir / "metrics.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int run_bench(const CommonArgs& args, const std::string& name) {
  std::string raw;
  load_config(args, raw);  // validated as JSON when present
  conflow::BenchContext ctx;
  ctx.seed = args.seed;
  ctx.full_scale = args.full_scale;
  ctx.config_hash = conflow::fnv1a_hex(raw);
  std::string csv;
  std::string svg;
  if (name == "bench-convergence") {
    csv = conflow::run_convergence_bench(ctx);
    svg = conflow::render_line_svg(csv, "dim_or_l", "mean_log10_err20", "score",
                                   "boundary flow convergence");
  } else if (name == "bench-repulsion") {
    csv = conflow::run_repulsion_bench(ctx);
    svg = conflow::render_line_svg(csv, "p", "ratio", "config_hash",
                                   "repulsed / naive min pairwise distance");
  } else if (name == "bench-bands") {
    csv = conflow::run_band_bench(ctx);
    svg = conflow::render_line_svg(csv, "variant_id", "coverage", "method",
                                   "band coverage by variant");
  } else {
    csv = conflow::run_cpd_audit(ctx);
    svg = conflow::render_line_svg(csv, "beta", "empirical", "pi",
                                   "CPD coverage audit");
  }
  fs::path dir(args.out_dir);
  fs::create_directories(dir);
  std::string stem = name;
  write_text(dir / (stem + ".csv"), csv);
  write_text(dir / (stem + ".svg"), svg);
  std::cout << "wrote " << (dir / (stem + ".csv")).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"score-controlled conformal boundary sampling toolkit"};
  app.require_subcommand(1);

  std::map<std::string, CommonArgs> cmd_args;
  const struct {
    const char* name;
    const char* help;
    bool needs_config;
  } cmds[] = {
      {"datagen", "generate a synthetic dataset", true},
      {"calibrate", "score a calibration bank and emit thresholds", true},
      {"sample-boundary", "flow base points to a conformal boundary", true},
      {"repulse", "spread boundary points along the level set", true},
      {"sample-cpd", "draw conformal predictive distribution samples", true},
      {"band", "pointwise envelope band from a sample bank", true},
      {"metrics", "distributional metrics for a sample bank", true},
      {"bench-convergence", "convergence benchmark grid", false},
      {"bench-repulsion", "repulsion spread benchmark", false},
      {"bench-bands", "risk band benchmark on 1-D GP variants", false},
      {"audit-cpd", "CPD coverage audit", false},
  };
  for (const auto& c : cmds)
    add_common(app.add_subcommand(c.name, c.help), cmd_args[c.name], c.needs_config);

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& c : cmds) {
      if (!app.got_subcommand(c.name)) continue;
      const CommonArgs& args = cmd_args[c.name];
      std::string name = c.name;
      if (name == "datagen") return cmd_datagen(args);
      if (name == "calibrate") return cmd_calibrate(args);
      if (name == "sample-boundary") return cmd_sample_boundary(args);
      if (name == "repulse") return cmd_repulse(args);
      if (name == "sample-cpd") return cmd_sample_cpd(args);
      if (name == "band") return cmd_band(args);
      if (name == "metrics") return cmd_metrics(args);
      return run_bench(args, name);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
