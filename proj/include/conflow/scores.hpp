#pragma once

#include <memory>
#include <stdexcept>
#include <vector>

#include "conflow/tensor.hpp"

namespace conflow {

// Raised when a score gradient vanishes where the caller needs a direction.
struct DegenerateGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kEpsNum = 1e-8;       // generic "+eps" regularizer
inline constexpr double kEpsSpec = 1e-8;      // inside spectral log terms
inline constexpr double kArccosClip = 1.0 - 1e-7;

// Nonconformity score family with an analytic gradient wrt the candidate y.
// Immutable after construction; eval/grad are pure.
class Score {
 public:
  virtual ~Score() = default;
  virtual double eval(const Tensor& yhat, const Tensor& y) const = 0;
  virtual Tensor grad(const Tensor& yhat, const Tensor& y) const = 0;
};

using ScorePtr = std::shared_ptr<const Score>;

// Calibration residuals r_i = y_i - yhat_i, one per row.
struct ResidualBank {
  std::vector<Tensor> residuals;
};

// --- vector scores ---

ScorePtr make_l2_score();
ScorePtr make_l1_score();
ScorePtr make_huber_score(double delta);

// kNN residual score; requires bank.size() >= k. The neighbor set is frozen
// per gradient evaluation.
ScorePtr make_knn_score(const ResidualBank& bank, int k = 10);

// Diagonal Gaussian / Student-t NLL of the residual; fitted by moments.
ScorePtr make_gauss_nll_score(Tensor mu, Tensor sigma2);
ScorePtr make_student_t_nll_score(double nu, Tensor mu, Tensor sigma2);

ScorePtr fit_gauss_nll(const ResidualBank& bank, double eps = kEpsNum);
// moment matching: sigma2 = var * (nu-2)/nu, nu fixed (> 2)
ScorePtr fit_student_t_nll(const ResidualBank& bank, double nu = 3.0,
                           double eps = kEpsNum);

// --- field scores (H x W x C, spatial dims powers of two for spectral) ---

ScorePtr make_field_l2_score();
ScorePtr make_sobolev_score(double lambda_sob = 1.0);
ScorePtr make_psd_score();
ScorePtr make_wavelet_score(int depth = 3);

// max(s_sob/(k_sob+eps), s_psd/(k_psd+eps)); scales from calibration medians
ScorePtr make_combo_max_score(double kappa_sob, double kappa_psd,
                              double lambda_sob = 1.0);

// weighted-RMS of normalized local l2 and log-spectral terms
struct LocalCombinedParams {
  double kappa_l2 = 1.0;
  double kappa_spec = 1.0;
  double w_l2 = 10.0;
  double w_spec = 1.0;
};
ScorePtr make_local_combined_score(const LocalCombinedParams& p);

// base terms of the local combined score, exposed for scale fitting
double local_l2_term(const Tensor& yhat, const Tensor& y);
double local_spec_term(const Tensor& yhat, const Tensor& y);

// --- trajectory scores (T x 2) ---

ScorePtr make_traj_l2_score();

struct CgtParams {
  std::vector<double> weights = std::vector<double>(6, 1.0);  // pos,vel,curv,speed,turn,len
  std::vector<double> kappas = std::vector<double>(6, 1.0);
};
ScorePtr make_cgt_score(const CgtParams& p);

// the six raw CGT terms (pos, vel, curv, speed, turn, len)
std::vector<double> cgt_terms(const Tensor& yhat, const Tensor& y);

// --- scale fitting ---

// MAD of each term column over calibration samples, floored/offset by eps.
// terms[i] holds the per-sample values of term i.
std::vector<double> fit_mad_scales(const std::vector<std::vector<double>>& terms,
                                   double eps = kEpsNum);

// medians of per-sample base scores (ComboMax convention)
std::vector<double> fit_median_scales(const std::vector<std::vector<double>>& terms);

}  // namespace conflow
