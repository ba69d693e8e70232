#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace conflow {

// Shared settings for the benchmark runners. Desk scale finishes in minutes;
// full_scale restores the larger grids.
struct BenchContext {
  std::uint64_t seed = 1;
  bool full_scale = false;
  std::string config_hash = "default";
};

// 64-bit FNV-1a, hex encoded; used to stamp configs into result CSVs.
std::string fnv1a_hex(const std::string& text);

// "%.17g" with '.' decimal, locale independent
std::string format_g17(double v);

// Boundary-flow convergence across tasks, score families, dims and alpha.
// Columns: task,score,dim_or_l,alpha,mean_log10_err20,mean_final_err,
//          exceeds_tol,vendi_ratio,config_hash,seed
std::string run_convergence_bench(const BenchContext& ctx);

// Minimum pairwise distance of naive vs repulsed boundary batches.
// Columns: p,naive_min_nn,repulsed_min_nn,ratio,max_abs_err,config_hash,seed
std::string run_repulsion_bench(const BenchContext& ctx);

// Envelope bands on the four 1-D GP variants, raw and reconformalized.
// Columns: variant,variant_id,method,coverage,median_width,eta,config_hash,seed
std::string run_band_bench(const BenchContext& ctx);

// CPD coverage audit under three mixing measures.
// Columns: pi,beta,empirical,target,clamped_fraction,config_hash,seed
std::string run_cpd_audit(const BenchContext& ctx);

// Static line/scatter chart from a result CSV; a pure function of the CSV
// text. Rows are grouped by series_col and plotted as x_col vs y_col.
std::string render_line_svg(const std::string& csv, const std::string& x_col,
                            const std::string& y_col, const std::string& series_col,
                            const std::string& title);

}  // namespace conflow
