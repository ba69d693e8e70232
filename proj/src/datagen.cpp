#include "conflow/datagen.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include "conflow/numerics.hpp"

namespace conflow {

namespace {

// stream ids within one dataset seed: 0 shared parameters, 1..3 splits
constexpr std::uint64_t kSharedStream = 0;
constexpr std::uint64_t kSplitStream[3] = {1, 2, 3};

std::vector<double> draw_normals(RngStream& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

DataSplit linear_split(const std::vector<double>& theta, std::size_t p, std::size_t n,
                       RngStream& rng, bool student_t,
                       const std::vector<double>& sigma) {
  DataSplit split;
  split.x.reserve(n);
  split.y.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor xi = Tensor::zeros({p});
    for (double& v : xi.data) v = rng.normal();
    Tensor yi = Tensor::zeros({p});
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < p; ++k) acc += xi.data[k] * theta[k * p + j];
      double eps = student_t ? rng.student_t(3) * sigma[j] : rng.normal();
      yi.data[j] = acc + eps;
    }
    split.x.push_back(std::move(xi));
    split.y.push_back(std::move(yi));
  }
  return split;
}

Dataset linear_dataset(std::size_t p, std::size_t n, std::uint64_t seed,
                       bool student_t) {
  if (p < 1 || n < 1) throw std::invalid_argument("linear dataset: need p, n >= 1");
  if (student_t && p < 2) throw std::invalid_argument("student t dataset: need p >= 2");
  RngStream shared(seed, kSharedStream);
  std::vector<double> theta = draw_normals(shared, p * p);
  std::vector<double> sigma(p, 1.0);
  if (student_t)
    for (std::size_t j = 0; j < p; ++j)
      sigma[j] = std::exp(1.5 * static_cast<double>(j) / static_cast<double>(p - 1));
  Dataset ds;
  ds.seed = seed;
  DataSplit* splits[3] = {&ds.train, &ds.cal, &ds.test};
  for (int s = 0; s < 3; ++s) {
    RngStream rng(seed, kSplitStream[s]);
    *splits[s] = linear_split(theta, p, n, rng, student_t, sigma);
  }
  return ds;
}

// lower Cholesky factor of the squared exponential kernel on linspace(0,1,p)
Eigen::MatrixXd se_chol_1d(std::size_t p, double length_scale) {
  Eigen::MatrixXd k(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    double ui = static_cast<double>(i) / static_cast<double>(p - 1);
    for (std::size_t j = 0; j < p; ++j) {
      double uj = static_cast<double>(j) / static_cast<double>(p - 1);
      double d = ui - uj;
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          std::exp(-d * d / (2.0 * length_scale * length_scale));
    }
    k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += 1e-8;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gp1d: kernel Cholesky failed");
  return llt.matrixL();
}

Tensor gp1d_draw(const Eigen::MatrixXd& chol, RngStream& rng) {
  const auto p = static_cast<std::size_t>(chol.rows());
  Eigen::VectorXd z(chol.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  Eigen::VectorXd f = chol * z;
  Tensor t = Tensor::zeros({p});
  for (std::size_t i = 0; i < p; ++i) t.data[i] = f(static_cast<Eigen::Index>(i));
  return t;
}

// centered exponentiation with amplitude 1/2, then global recentering
std::vector<Tensor> center_exp_half(const std::vector<Tensor>& ys) {
  const std::size_t n = ys.size();
  const std::size_t p = ys.front().numel();
  std::vector<double> ybar(p, 0.0);
  for (const Tensor& y : ys)
    for (std::size_t j = 0; j < p; ++j) ybar[j] += y.data[j] / static_cast<double>(n);
  std::vector<Tensor> out(n, Tensor::zeros({p}));
  std::vector<double> col_mean(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      out[i].data[j] = std::exp((ys[i].data[j] - ybar[j]) / 2.0);
      col_mean[j] += out[i].data[j] / static_cast<double>(n);
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) out[i].data[j] -= col_mean[j];
  return out;
}

// pointwise centered exponentiation at full amplitude, recentered globally
// (single scalar) rather than per location
std::vector<Tensor> asym_transform(const std::vector<Tensor>& ys) {
  const std::size_t n = ys.size();
  const std::size_t p = ys.front().numel();
  std::vector<double> ybar(p, 0.0);
  for (const Tensor& y : ys)
    for (std::size_t j = 0; j < p; ++j) ybar[j] += y.data[j] / static_cast<double>(n);
  std::vector<Tensor> out(n, Tensor::zeros({p}));
  double global = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      out[i].data[j] = std::exp(ys[i].data[j] - ybar[j]);
      global += out[i].data[j] / static_cast<double>(n * p);
    }
  for (Tensor& t : out)
    for (double& v : t.data) v -= global;
  return out;
}

void apply_gp1d_variant(DataSplit& split, Gp1dVariant variant, bool is_train,
                        std::size_t p) {
  if (variant == Gp1dVariant::Symmetric) return;
  if (variant == Gp1dVariant::Asym) {
    split.y = asym_transform(split.y);
    return;
  }
  split.y = center_exp_half(split.y);
  if (is_train) return;
  const double pi = std::numbers::pi;
  for (std::size_t j = 0; j < p; ++j) {
    double u = static_cast<double>(j) / static_cast<double>(p - 1);
    double mean_shift, scale = 1.0;
    if (variant == Gp1dVariant::BiasMu) {
      mean_shift = 0.5 + 0.25 * std::sin(4.0 * pi * (2.0 * u - 1.0));
    } else {
      mean_shift = 0.5 * std::sin(4.0 * pi * (2.0 * u - 1.0));
      scale = 0.5 * (1.0 + (4.0 * pi - 1.0) * u);
    }
    for (Tensor& y : split.y) y.data[j] = mean_shift + scale * y.data[j];
  }
}

// circulant eigenvalues of the separable SE kernel embedded on an m x m torus
// with grid spacing 1/p; retries with more padding before giving up
std::vector<double> embedding_eigs(std::size_t p, double length_scale,
                                   std::size_t& m_out) {
  for (std::size_t m = 2 * p; m <= 8 * p; m *= 2) {
    std::vector<double> base(m);
    for (std::size_t i = 0; i < m; ++i) {
      double d = static_cast<double>(std::min(i, m - i)) / static_cast<double>(p);
      base[i] = std::exp(-d * d / (2.0 * length_scale * length_scale));
    }
    std::vector<std::complex<double>> row(m);
    for (std::size_t i = 0; i < m; ++i) row[i] = base[i];
    fft(row, false);
    std::vector<double> eig1(m);
    bool ok = true;
    for (std::size_t i = 0; i < m; ++i) {
      double v = row[i].real();
      if (v < -1e-8) {
        ok = false;
        break;
      }
      eig1[i] = std::max(v, 0.0);
    }
    if (!ok) continue;
    std::vector<double> eig(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) eig[i * m + j] = eig1[i] * eig1[j];
    m_out = m;
    return eig;
  }
  throw std::runtime_error("gp2d: circulant embedding not PSD after padding");
}

}  // namespace

Tensor sample_gp2d_field(std::size_t p, double length_scale, RngStream& rng) {
  if (!is_power_of_two(p)) throw std::invalid_argument("gp2d: p must be a power of two");
  std::size_t m = 0;
  static thread_local std::size_t cached_p = 0;
  static thread_local double cached_l = -1.0;
  static thread_local std::size_t cached_m = 0;
  static thread_local std::vector<double> cached_eig;
  if (cached_p != p || cached_l != length_scale) {
    cached_eig = embedding_eigs(p, length_scale, m);
    cached_p = p;
    cached_l = length_scale;
    cached_m = m;
  }
  m = cached_m;
  const std::vector<double>& eig = cached_eig;
  const double mn = static_cast<double>(m) * static_cast<double>(m);
  std::vector<std::complex<double>> freq(m * m);
  for (std::size_t i = 0; i < m * m; ++i) {
    double amp = std::sqrt(eig[i] / mn);
    freq[i] = std::complex<double>(amp * rng.normal(), amp * rng.normal());
  }
  // row-column forward transform of the weighted noise; real part has the
  // target covariance
  std::vector<std::complex<double>> scratch(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) scratch[j] = freq[i * m + j];
    fft(scratch, false);
    for (std::size_t j = 0; j < m; ++j) freq[i * m + j] = scratch[j];
  }
  scratch.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < m; ++i) scratch[i] = freq[i * m + j];
    fft(scratch, false);
    for (std::size_t i = 0; i < m; ++i) freq[i * m + j] = scratch[i];
  }
  Tensor field = Tensor::zeros({p, p});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j) field.at(i, j) = freq[i * m + j].real();
  return field;
}

Dataset gen_linear_gaussian(std::size_t p, std::size_t n, std::uint64_t seed) {
  return linear_dataset(p, n, seed, false);
}

Dataset gen_linear_student_t(std::size_t p, std::size_t n, std::uint64_t seed) {
  return linear_dataset(p, n, seed, true);
}

Dataset gen_gp1d(std::size_t n, std::size_t p, double lx, double ly, double beta,
                 Gp1dVariant variant, std::uint64_t seed) {
  if (p < 2 || n < 1) throw std::invalid_argument("gp1d: need p >= 2, n >= 1");
  Eigen::MatrixXd lx_chol = se_chol_1d(p, lx);
  Eigen::MatrixXd ly_chol = se_chol_1d(p, ly);
  Dataset ds;
  ds.seed = seed;
  DataSplit* splits[3] = {&ds.train, &ds.cal, &ds.test};
  for (int s = 0; s < 3; ++s) {
    RngStream rng(seed, kSplitStream[s]);
    DataSplit& split = *splits[s];
    split.x.reserve(n);
    split.y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Tensor x = gp1d_draw(lx_chol, rng);
      Tensor eps = gp1d_draw(ly_chol, rng);
      Tensor y = Tensor::zeros({p});
      for (std::size_t j = 0; j < p; ++j) y.data[j] = beta * x.data[j] + eps.data[j];
      split.x.push_back(std::move(x));
      split.y.push_back(std::move(y));
    }
    apply_gp1d_variant(split, variant, s == 0, p);
  }
  return ds;
}

Dataset gen_gp2d(std::size_t n, std::size_t p, double lx, double ly, double beta,
                 std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gp2d: need n >= 1");
  Dataset ds;
  ds.seed = seed;
  DataSplit* splits[3] = {&ds.train, &ds.cal, &ds.test};
  for (int s = 0; s < 3; ++s) {
    RngStream rng(seed, kSplitStream[s]);
    DataSplit& split = *splits[s];
    split.x.reserve(n);
    split.y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Tensor x = sample_gp2d_field(p, lx, rng);
      Tensor eps = sample_gp2d_field(p, ly, rng);
      Tensor y = Tensor::zeros({p, p});
      for (std::size_t k = 0; k < y.numel(); ++k)
        y.data[k] = beta * x.data[k] + eps.data[k];
      split.x.push_back(std::move(x));
      split.y.push_back(std::move(y));
    }
  }
  return ds;
}

Dataset gen_gp2d_downscale(std::size_t n, std::size_t p, std::size_t q, double lx,
                           double ly, double beta, std::uint64_t seed) {
  Dataset ds = gen_gp2d(n, p, lx, ly, beta, seed);
  DataSplit* splits[3] = {&ds.train, &ds.cal, &ds.test};
  for (DataSplit* split : splits)
    for (std::size_t i = 0; i < split->y.size(); ++i)
      split->x[i] = resize(split->y[i], q, q, ResizeMode::Bilinear);
  return ds;
}

Dataset gen_trajectories(std::size_t n, std::size_t t_len, double noise_sigma,
                         std::uint64_t seed) {
  if (t_len < 3) throw std::invalid_argument("trajectories: need T >= 3");
  Dataset ds;
  ds.seed = seed;
  DataSplit* splits[3] = {&ds.train, &ds.cal, &ds.test};
  constexpr int kSmooth = 3;  // velocity moving-average half width
  for (int s = 0; s < 3; ++s) {
    RngStream rng(seed, kSplitStream[s]);
    DataSplit& split = *splits[s];
    split.x.reserve(n);
    split.y.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> vx(t_len), vy(t_len);
      for (std::size_t t = 0; t < t_len; ++t) {
        vx[t] = rng.normal();
        vy[t] = rng.normal();
      }
      Tensor traj = Tensor::zeros({t_len, 2});
      double px = 0, py = 0;
      double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
      double cx = std::cos(heading), cy = std::sin(heading);
      for (std::size_t t = 0; t < t_len; ++t) {
        double sx = 0, sy = 0;
        int cnt = 0;
        for (int d = -kSmooth; d <= kSmooth; ++d) {
          long long u = static_cast<long long>(t) + d;
          if (u < 0 || u >= static_cast<long long>(t_len)) continue;
          sx += vx[static_cast<std::size_t>(u)];
          sy += vy[static_cast<std::size_t>(u)];
          ++cnt;
        }
        px += cx + 0.3 * sx / cnt;
        py += cy + 0.3 * sy / cnt;
        traj.at(t, 0) = px;
        traj.at(t, 1) = py;
      }
      Tensor pred = traj;
      if (noise_sigma > 0.0)
        for (double& v : pred.data) v += noise_sigma * rng.normal();
      split.x.push_back(std::move(pred));
      split.y.push_back(std::move(traj));
    }
  }
  return ds;
}

Tensor LinearPredictor::predict(const Tensor& x,
                                const std::vector<std::size_t>& out_shape) const {
  if (x.numel() != in_dim) throw std::invalid_argument("predict: input dim mismatch");
  Tensor out;
  out.shape = out_shape;
  out.data.assign(out_dim, 0.0);
  if (out.numel() != out_dim) throw std::invalid_argument("predict: output shape mismatch");
  for (std::size_t j = 0; j < out_dim; ++j) {
    double acc = y_mean[j];
    for (std::size_t k = 0; k < in_dim; ++k)
      acc += (x.data[k] - x_mean[k]) * weights[k * out_dim + j];
    out.data[j] = acc;
  }
  return out;
}

LinearPredictor fit_ridge(const DataSplit& train, double ridge_lambda) {
  if (train.x.empty() || train.x.size() != train.y.size())
    throw std::invalid_argument("fit_ridge: need matching nonempty x/y");
  const std::size_t n = train.x.size();
  const std::size_t d = train.x.front().numel();
  const std::size_t m = train.y.front().numel();
  Eigen::MatrixXd a(n, d), b(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = train.x[i].data[k];
    for (std::size_t j = 0; j < m; ++j)
      b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = train.y[i].data[j];
  }
  Eigen::RowVectorXd xm = a.colwise().mean();
  Eigen::RowVectorXd ym = b.colwise().mean();
  a.rowwise() -= xm;
  b.rowwise() -= ym;
  Eigen::MatrixXd gram = a.transpose() * a;
  gram.diagonal().array() += ridge_lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("fit_ridge: singular normal equations");
  Eigen::MatrixXd w = ldlt.solve(a.transpose() * b);
  if (!w.allFinite()) throw std::runtime_error("fit_ridge: non-finite solution");
  LinearPredictor lp;
  lp.in_dim = d;
  lp.out_dim = m;
  lp.weights.resize(d * m);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t j = 0; j < m; ++j)
      lp.weights[k * m + j] = w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
  lp.x_mean.assign(xm.data(), xm.data() + d);
  lp.y_mean.assign(ym.data(), ym.data() + m);
  return lp;
}

}  // namespace conflow
