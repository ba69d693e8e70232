#include "conflow/scores.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>

#include "conflow/numerics.hpp"

namespace conflow {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("score: shape mismatch");
}

Tensor checked(Tensor g) {
  if (norm(g) < 1e-12)
    throw DegenerateGradient("score gradient norm below 1e-12");
  return g;
}

// field helpers: accept H x W (C=1) or H x W x C
struct FieldDims {
  std::size_t h, w, c;
};

FieldDims field_dims(const Tensor& t) {
  if (t.shape.size() == 2) return {t.shape[0], t.shape[1], 1};
  if (t.shape.size() == 3) return {t.shape[0], t.shape[1], t.shape[2]};
  throw std::invalid_argument("field score: expected H x W or H x W x C tensor");
}

Tensor channel(const Tensor& t, const FieldDims& d, std::size_t ch) {
  Tensor out = Tensor::zeros({d.h, d.w});
  for (std::size_t i = 0; i < d.h; ++i)
    for (std::size_t j = 0; j < d.w; ++j)
      out.at(i, j) = t.data[(i * d.w + j) * d.c + ch];
  return out;
}

void add_channel(Tensor& t, const FieldDims& d, std::size_t ch, const Tensor& plane,
                 double scale) {
  for (std::size_t i = 0; i < d.h; ++i)
    for (std::size_t j = 0; j < d.w; ++j)
      t.data[(i * d.w + j) * d.c + ch] += scale * plane.at(i, j);
}

// --- vector families ---

class L2Score final : public Score {
 public:
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    double ss = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      double r = y.data[i] - yhat.data[i];
      ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(y.numel()));
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    double s = eval(yhat, y);
    if (s == 0.0) throw DegenerateGradient("l2 gradient at zero residual");
    Tensor g = y - yhat;
    double c = 1.0 / (static_cast<double>(y.numel()) * s);
    for (double& v : g.data) v *= c;
    return checked(std::move(g));
  }
};

class L1Score final : public Score {
 public:
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += std::abs(y.data[i] - yhat.data[i]);
    return s / static_cast<double>(y.numel());
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    Tensor g = Tensor::zeros(y.shape);
    double c = 1.0 / static_cast<double>(y.numel());
    for (std::size_t i = 0; i < y.numel(); ++i) {
      double r = y.data[i] - yhat.data[i];
      g.data[i] = (r > 0 ? c : (r < 0 ? -c : 0.0));  // sign(0) = 0
    }
    return checked(std::move(g));
  }
};

class HuberScore final : public Score {
 public:
  explicit HuberScore(double delta) : delta_(delta) {
    if (delta <= 0) throw std::invalid_argument("huber: delta must be > 0");
  }
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      double r = std::abs(y.data[i] - yhat.data[i]);
      s += (r < delta_) ? 0.5 * r * r : delta_ * (r - 0.5 * delta_);
    }
    return s / static_cast<double>(y.numel());
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    Tensor g = Tensor::zeros(y.shape);
    double c = 1.0 / static_cast<double>(y.numel());
    for (std::size_t i = 0; i < y.numel(); ++i) {
      double r = y.data[i] - yhat.data[i];
      g.data[i] = c * (std::abs(r) < delta_ ? r : delta_ * (r > 0 ? 1.0 : -1.0));
    }
    return checked(std::move(g));
  }

 private:
  double delta_;
};

class KnnScore final : public Score {
 public:
  KnnScore(std::vector<Tensor> bank, int k) : bank_(std::move(bank)), k_(k) {
    if (k_ < 1) throw std::invalid_argument("knn: k must be >= 1");
    if (bank_.size() < static_cast<std::size_t>(k_))
      throw std::invalid_argument("knn: bank smaller than k");
  }
  double eval(const Tensor& yhat, const Tensor& y) const override {
    Tensor r = y - yhat;
    auto nn = neighbors(r);
    double s = 0;
    for (std::size_t i : nn) s += sq_norm(r - bank_[i]);
    return s / static_cast<double>(k_);
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    Tensor r = y - yhat;
    auto nn = neighbors(r);  // frozen per evaluation
    Tensor g = Tensor::zeros(y.shape);
    for (std::size_t i : nn) axpy(2.0 / static_cast<double>(k_), r - bank_[i], g);
    return checked(std::move(g));
  }

 private:
  std::vector<std::size_t> neighbors(const Tensor& r) const {
    std::vector<std::pair<double, std::size_t>> d(bank_.size());
    for (std::size_t i = 0; i < bank_.size(); ++i) d[i] = {sq_norm(r - bank_[i]), i};
    std::partial_sort(d.begin(), d.begin() + k_, d.end());
    std::vector<std::size_t> nn(k_);
    for (int i = 0; i < k_; ++i) nn[i] = d[i].second;
    return nn;
  }
  std::vector<Tensor> bank_;
  int k_;
};

class GaussNllScore final : public Score {
 public:
  GaussNllScore(Tensor mu, Tensor sigma2) : mu_(std::move(mu)), sigma2_(std::move(sigma2)) {}
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    if (y.numel() != mu_.numel()) throw std::invalid_argument("gauss nll: dim mismatch");
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      double z = y.data[i] - yhat.data[i] - mu_.data[i];
      s += std::log(2.0 * std::numbers::pi * sigma2_.data[i]) + z * z / sigma2_.data[i];
    }
    return 0.5 * s;
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    Tensor g = Tensor::zeros(y.shape);
    for (std::size_t i = 0; i < y.numel(); ++i)
      g.data[i] = (y.data[i] - yhat.data[i] - mu_.data[i]) / sigma2_.data[i];
    return checked(std::move(g));
  }

 private:
  Tensor mu_, sigma2_;
};

class StudentTNllScore final : public Score {
 public:
  StudentTNllScore(double nu, Tensor mu, Tensor sigma2)
      : nu_(nu), mu_(std::move(mu)), sigma2_(std::move(sigma2)) {
    if (nu_ <= 2.0) throw std::invalid_argument("student-t: nu must be > 2");
  }
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    const double d = static_cast<double>(y.numel());
    double q = 0, logdet = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      double z = y.data[i] - yhat.data[i] - mu_.data[i];
      q += z * z / sigma2_.data[i];
      logdet += std::log(sigma2_.data[i]);
    }
    double c = std::lgamma((nu_ + d) / 2.0) - std::lgamma(nu_ / 2.0) -
               0.5 * d * std::log(nu_ * std::numbers::pi) - 0.5 * logdet;
    return -(c - 0.5 * (nu_ + d) * std::log1p(q / nu_));
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    const double d = static_cast<double>(y.numel());
    double q = 0;
    Tensor g = Tensor::zeros(y.shape);
    for (std::size_t i = 0; i < y.numel(); ++i) {
      double z = y.data[i] - yhat.data[i] - mu_.data[i];
      q += z * z / sigma2_.data[i];
      g.data[i] = z / sigma2_.data[i];
    }
    double c = (nu_ + d) / (nu_ + q);
    for (double& v : g.data) v *= c;
    return checked(std::move(g));
  }

 private:
  double nu_;
  Tensor mu_, sigma2_;
};

// --- field families ---

class FieldL2Score final : public Score {
 public:
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    field_dims(y);
    double ss = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      double r = y.data[i] - yhat.data[i];
      ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(y.numel()));
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    double s = eval(yhat, y);
    if (s == 0.0) throw DegenerateGradient("field l2 gradient at zero residual");
    Tensor g = y - yhat;
    double c = 1.0 / (static_cast<double>(y.numel()) * s);
    for (double& v : g.data) v *= c;
    return checked(std::move(g));
  }
};

class SobolevScore final : public Score {
 public:
  explicit SobolevScore(double lambda) : lambda_(lambda) {}
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    Tensor e = y - yhat;
    return std::sqrt(quad(e, field_dims(y)));
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    FieldDims d = field_dims(y);
    Tensor e = y - yhat;
    double s = std::sqrt(quad(e, d));
    if (s == 0.0) throw DegenerateGradient("sobolev gradient at zero residual");
    // dq/de, then /(2s)
    const double n = static_cast<double>(e.numel());
    Tensor g = Tensor::zeros(y.shape);
    for (std::size_t i = 0; i < e.numel(); ++i) g.data[i] = 2.0 * e.data[i] / n;
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t i = 0; i < d.h; ++i) {
        for (std::size_t j = 0; j < d.w; ++j) {
          double dx = ec(e, d, i, (j + 1) % d.w, c) - ec(e, d, i, j, c);
          double dy = ec(e, d, (i + 1) % d.h, j, c) - ec(e, d, i, j, c);
          double cx = 2.0 * lambda_ * dx / n;
          double cy = 2.0 * lambda_ * dy / n;
          gc(g, d, i, (j + 1) % d.w, c) += cx;
          gc(g, d, i, j, c) -= cx;
          gc(g, d, (i + 1) % d.h, j, c) += cy;
          gc(g, d, i, j, c) -= cy;
        }
      }
    }
    for (double& v : g.data) v /= 2.0 * s;
    return checked(std::move(g));
  }

 private:
  static double ec(const Tensor& t, const FieldDims& d, std::size_t i, std::size_t j,
                   std::size_t c) {
    return t.data[(i * d.w + j) * d.c + c];
  }
  static double& gc(Tensor& t, const FieldDims& d, std::size_t i, std::size_t j,
                    std::size_t c) {
    return t.data[(i * d.w + j) * d.c + c];
  }
  double quad(const Tensor& e, const FieldDims& d) const {
    const double n = static_cast<double>(e.numel());
    double s0 = 0, sx = 0, sy = 0;
    for (double v : e.data) s0 += v * v;
    for (std::size_t c = 0; c < d.c; ++c) {
      for (std::size_t i = 0; i < d.h; ++i) {
        for (std::size_t j = 0; j < d.w; ++j) {
          double dx = ec(e, d, i, (j + 1) % d.w, c) - ec(e, d, i, j, c);
          double dy = ec(e, d, (i + 1) % d.h, j, c) - ec(e, d, i, j, c);
          sx += dx * dx;
          sy += dy * dy;
        }
      }
    }
    return s0 / n + lambda_ * (sx / n + sy / n);
  }
  double lambda_;
};

class PsdScore final : public Score {
 public:
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    FieldDims d = field_dims(y);
    Tensor py = power(y, d), ph = power(yhat, d);
    double s = 0;
    for (std::size_t i = 0; i < py.numel(); ++i) s += std::abs(ph.data[i] - py.data[i]);
    return s;
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    FieldDims d = field_dims(y);
    Tensor py = power(y, d), ph = power(yhat, d);
    // ds/dP_y = sign(P_y - P_yhat); exact ties use subgradient 0
    std::vector<double> c(py.numel());
    for (std::size_t i = 0; i < py.numel(); ++i) {
      double diff = py.data[i] - ph.data[i];
      c[i] = (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0));
    }
    Tensor g = Tensor::zeros(y.shape);
    for (std::size_t ch = 0; ch < d.c; ++ch) {
      auto fy = fft2(channel(y, d, ch));
      for (std::size_t i = 0; i < fy.size(); ++i) fy[i] *= c[i];
      Tensor plane = fft2_adjoint_real(fy, d.h, d.w);
      add_channel(g, d, ch, plane, 2.0);
    }
    return checked(std::move(g));
  }

 private:
  static Tensor power(const Tensor& t, const FieldDims& d) {
    Tensor p = Tensor::zeros({d.h, d.w});
    for (std::size_t ch = 0; ch < d.c; ++ch) {
      Tensor pc = fft2_power(channel(t, d, ch));
      for (std::size_t i = 0; i < p.numel(); ++i) p.data[i] += pc.data[i];
    }
    return p;
  }
};

class WaveletScore final : public Score {
 public:
  explicit WaveletScore(int depth) : depth_(depth) {}
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    FieldDims d = field_dims(y);
    Tensor e = yhat - y;
    double s = 0;
    for (std::size_t ch = 0; ch < d.c; ++ch) {
      auto pyr = dwt2(channel(e, d, ch), depth_);
      for (const auto& lvl : pyr.levels)
        s += (rms(lvl.ch) + rms(lvl.cv) + rms(lvl.cd)) / 3.0;
    }
    return s;
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    FieldDims d = field_dims(y);
    Tensor e = yhat - y;
    Tensor g = Tensor::zeros(y.shape);
    for (std::size_t ch = 0; ch < d.c; ++ch) {
      auto pyr = dwt2(channel(e, d, ch), depth_);
      Dwt2Pyramid gp;
      gp.approx = Tensor::zeros(pyr.approx.shape);
      for (const auto& lvl : pyr.levels)
        gp.levels.push_back(Dwt2Level{band_grad(lvl.ch), band_grad(lvl.cv), band_grad(lvl.cd)});
      // orthogonal transform: adjoint of analysis = synthesis; de/dy = -1
      Tensor plane = idwt2(gp);
      add_channel(g, d, ch, plane, -1.0);
    }
    return checked(std::move(g));
  }

 private:
  static double rms(const Tensor& b) {
    return std::sqrt(sq_norm(b) / static_cast<double>(b.numel()));
  }
  static Tensor band_grad(const Tensor& b) {
    double r = rms(b);
    Tensor g = Tensor::zeros(b.shape);
    if (r == 0.0) return g;  // subgradient 0 on an all-zero band
    double c = 1.0 / (3.0 * static_cast<double>(b.numel()) * r);
    for (std::size_t i = 0; i < b.numel(); ++i) g.data[i] = c * b.data[i];
    return g;
  }
  int depth_;
};

class ComboMaxScore final : public Score {
 public:
  ComboMaxScore(double kappa_sob, double kappa_psd, double lambda_sob)
      : sob_(lambda_sob), kappa_sob_(kappa_sob), kappa_psd_(kappa_psd) {
    if (kappa_sob <= 0 || kappa_psd <= 0)
      throw std::invalid_argument("combo max: scales must be > 0");
  }
  double eval(const Tensor& yhat, const Tensor& y) const override {
    return std::max(sob_.eval(yhat, y) / (kappa_sob_ + kEpsNum),
                    psd_.eval(yhat, y) / (kappa_psd_ + kEpsNum));
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    double a = sob_.eval(yhat, y) / (kappa_sob_ + kEpsNum);
    double b = psd_.eval(yhat, y) / (kappa_psd_ + kEpsNum);
    if (a >= b) {
      Tensor g = sob_.grad(yhat, y);
      for (double& v : g.data) v /= kappa_sob_ + kEpsNum;
      return checked(std::move(g));
    }
    Tensor g = psd_.grad(yhat, y);
    for (double& v : g.data) v /= kappa_psd_ + kEpsNum;
    return checked(std::move(g));
  }

 private:
  SobolevScore sob_;
  PsdScore psd_;
  double kappa_sob_, kappa_psd_;
};

// mean-removed log power spectrum of one channel plane
struct SpecPlane {
  std::vector<std::complex<double>> freq;  // of the centered field
  std::vector<double> logspec;             // log(1 + |freq|^2 + eps_spec)
};

SpecPlane log_spectrum(const Tensor& plane) {
  Tensor centered = plane;
  double m = std::accumulate(plane.data.begin(), plane.data.end(), 0.0) /
             static_cast<double>(plane.numel());
  for (double& v : centered.data) v -= m;
  SpecPlane sp;
  sp.freq = fft2(centered);
  sp.logspec.resize(sp.freq.size());
  for (std::size_t i = 0; i < sp.freq.size(); ++i)
    sp.logspec[i] = std::log1p(std::norm(sp.freq[i]) + kEpsSpec);
  return sp;
}

double spec_distance(const Tensor& yhat, const Tensor& y, const FieldDims& d) {
  double acc = 0;
  for (std::size_t ch = 0; ch < d.c; ++ch) {
    SpecPlane sy = log_spectrum(channel(y, d, ch));
    SpecPlane sh = log_spectrum(channel(yhat, d, ch));
    double mse = 0;
    for (std::size_t i = 0; i < sy.logspec.size(); ++i) {
      double diff = sy.logspec[i] - sh.logspec[i];
      mse += diff * diff;
    }
    acc += mse / static_cast<double>(sy.logspec.size());
  }
  return acc / static_cast<double>(d.c);
}

class LocalCombinedScore final : public Score {
 public:
  explicit LocalCombinedScore(const LocalCombinedParams& p) : p_(p) {
    if (p.kappa_l2 <= 0 || p.kappa_spec <= 0)
      throw std::invalid_argument("local combined: scales must be > 0");
  }
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    double t1 = local_l2_term(yhat, y);
    double t2 = local_spec_term(yhat, y);
    return aggregate(t1, t2);
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    FieldDims d = field_dims(y);
    double t1 = local_l2_term(yhat, y);
    double t2 = local_spec_term(yhat, y);
    double s = aggregate(t1, t2);
    const double denom = p_.w_l2 + p_.w_spec + kEpsNum;
    // ds/dt_k = w_k t_k / (kappa_k^2 denom s)
    double c1 = p_.w_l2 * t1 / (p_.kappa_l2 * p_.kappa_l2 * denom * s);
    double c2 = p_.w_spec * t2 / (p_.kappa_spec * p_.kappa_spec * denom * s);

    Tensor g = Tensor::zeros(y.shape);
    // dt1/dy = r / (N t1)
    {
      double c = c1 / (static_cast<double>(y.numel()) * t1);
      for (std::size_t i = 0; i < y.numel(); ++i)
        g.data[i] += c * (y.data[i] - yhat.data[i]);
    }
    // dt2/dy = (1/(2 t2)) d(spec distance)/dy
    {
      double cd = c2 / (2.0 * t2);
      std::size_t hw = d.h * d.w;
      for (std::size_t ch = 0; ch < d.c; ++ch) {
        SpecPlane sy = log_spectrum(channel(y, d, ch));
        SpecPlane sh = log_spectrum(channel(yhat, d, ch));
        std::vector<std::complex<double>> z(sy.freq.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
          double coeff = 2.0 * (sy.logspec[i] - sh.logspec[i]) /
                         (static_cast<double>(d.c) * static_cast<double>(hw) *
                          (1.0 + std::norm(sy.freq[i]) + kEpsSpec));
          z[i] = coeff * sy.freq[i];
        }
        Tensor plane = fft2_adjoint_real(z, d.h, d.w);
        // adjoint of mean removal
        double pm = std::accumulate(plane.data.begin(), plane.data.end(), 0.0) /
                    static_cast<double>(plane.numel());
        for (double& v : plane.data) v = 2.0 * (v - pm);
        add_channel(g, d, ch, plane, cd);
      }
    }
    return checked(std::move(g));
  }

 private:
  double aggregate(double t1, double t2) const {
    double n1 = t1 / p_.kappa_l2, n2 = t2 / p_.kappa_spec;
    return std::sqrt((p_.w_l2 * n1 * n1 + p_.w_spec * n2 * n2) /
                     (p_.w_l2 + p_.w_spec + kEpsNum));
  }
  LocalCombinedParams p_;
};

// --- trajectory families ---

void require_traj(const Tensor& t, std::size_t min_t) {
  if (t.shape.size() != 2 || t.shape[1] != 2)
    throw std::invalid_argument("trajectory score: expected T x 2 tensor");
  if (t.shape[0] < min_t)
    throw std::invalid_argument("trajectory score: too few time steps");
}

class TrajL2Score final : public Score {
 public:
  double eval(const Tensor& yhat, const Tensor& y) const override {
    require_same_shape(yhat, y);
    require_traj(y, 1);
    double ss = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      double r = y.data[i] - yhat.data[i];
      ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(y.numel()));
  }
  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    double s = eval(yhat, y);
    if (s == 0.0) throw DegenerateGradient("traj l2 gradient at zero residual");
    Tensor g = y - yhat;
    double c = 1.0 / (static_cast<double>(y.numel()) * s);
    for (double& v : g.data) v *= c;
    return checked(std::move(g));
  }
};

struct Vec2 {
  double x = 0, y = 0;
};
Vec2 seg(const Tensor& t, std::size_t i) {
  return {t.at(i + 1, 0) - t.at(i, 0), t.at(i + 1, 1) - t.at(i, 1)};
}
double vnorm(const Vec2& v) { return std::sqrt(v.x * v.x + v.y * v.y); }
double vdot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }

double path_length(const Tensor& t) {
  double L = 0;
  for (std::size_t i = 0; i + 1 < t.shape[0]; ++i) L += vnorm(seg(t, i));
  return L;
}

// turning angles with clipped arccos
std::vector<double> turn_angles(const Tensor& t) {
  std::size_t T = t.shape[0];
  std::vector<double> th(T - 2);
  for (std::size_t i = 0; i + 2 < T; ++i) {
    Vec2 v0 = seg(t, i), v1 = seg(t, i + 1);
    double a = vdot(v0, v1) / (vnorm(v0) * vnorm(v1) + kEpsNum);
    a = std::clamp(a, -kArccosClip, kArccosClip);
    th[i] = std::acos(a);
  }
  return th;
}

std::vector<double> cgt_terms_impl(const Tensor& yhat, const Tensor& y) {
  require_same_shape(yhat, y);
  require_traj(y, 3);
  const std::size_t T = y.shape[0];
  double qpos = 0, qvel = 0, qcurv = 0, qspeed = 0, qturn = 0;
  for (std::size_t t = 0; t < T; ++t) {
    double dx = y.at(t, 0) - yhat.at(t, 0), dy = y.at(t, 1) - yhat.at(t, 1);
    qpos += dx * dx + dy * dy;
  }
  for (std::size_t t = 0; t + 1 < T; ++t) {
    Vec2 a = seg(y, t), b = seg(yhat, t);
    double dx = a.x - b.x, dy = a.y - b.y;
    qvel += dx * dx + dy * dy;
    double ds = vnorm(a) - vnorm(b);
    qspeed += ds * ds;
  }
  for (std::size_t t = 0; t + 2 < T; ++t) {
    Vec2 a0 = seg(y, t), a1 = seg(y, t + 1), b0 = seg(yhat, t), b1 = seg(yhat, t + 1);
    double dx = (a1.x - a0.x) - (b1.x - b0.x);
    double dy = (a1.y - a0.y) - (b1.y - b0.y);
    qcurv += dx * dx + dy * dy;
  }
  auto thy = turn_angles(y), thh = turn_angles(yhat);
  for (std::size_t i = 0; i < thy.size(); ++i) {
    double d = thy[i] - thh[i];
    qturn += d * d;
  }
  double tn = static_cast<double>(T);
  return {std::sqrt(qpos / (2.0 * tn) + kEpsNum),
          std::sqrt(qvel / (2.0 * (tn - 1.0)) + kEpsNum),
          std::sqrt(qcurv / (2.0 * (tn - 2.0)) + kEpsNum),
          std::sqrt(qspeed / (tn - 1.0) + kEpsNum),
          std::sqrt(qturn / (tn - 2.0) + kEpsNum),
          std::abs(path_length(y) - path_length(yhat))};
}

class CgtScore final : public Score {
 public:
  explicit CgtScore(const CgtParams& p) : p_(p) {
    if (p.weights.size() != 6 || p.kappas.size() != 6)
      throw std::invalid_argument("cgt: expected 6 weights and 6 scales");
    for (double k : p.kappas)
      if (k <= 0) throw std::invalid_argument("cgt: scales must be > 0");
  }

  double eval(const Tensor& yhat, const Tensor& y) const override {
    auto t = cgt_terms_impl(yhat, y);
    double wsum = std::accumulate(p_.weights.begin(), p_.weights.end(), 0.0);
    double acc = 0;
    for (int k = 0; k < 6; ++k) {
      double n = t[k] / p_.kappas[k];
      acc += p_.weights[k] * n * n;
    }
    return std::sqrt(acc / (wsum + kEpsNum));
  }

  Tensor grad(const Tensor& yhat, const Tensor& y) const override {
    auto t = cgt_terms_impl(yhat, y);
    double s = eval(yhat, y);
    if (s == 0.0) throw DegenerateGradient("cgt gradient degenerate");
    double wsum = std::accumulate(p_.weights.begin(), p_.weights.end(), 0.0);
    const std::size_t T = y.shape[0];
    double tn = static_cast<double>(T);
    Tensor g = Tensor::zeros(y.shape);

    // accumulate (w_k / kappa_k^2) * dq_k/dy, where q_k = t_k^2
    auto coef = [&](int k) { return p_.weights[k] / (p_.kappas[k] * p_.kappas[k]); };

    // pos
    for (std::size_t i = 0; i < T; ++i)
      for (int a = 0; a < 2; ++a)
        g.at(i, a) += coef(0) * (y.at(i, a) - yhat.at(i, a)) / tn;  // 2*q' /(2T)

    // vel
    for (std::size_t i = 0; i + 1 < T; ++i) {
      Vec2 va = seg(y, i), vb = seg(yhat, i);
      double cx = coef(1) * (va.x - vb.x) / (tn - 1.0);
      double cy = coef(1) * (va.y - vb.y) / (tn - 1.0);
      g.at(i + 1, 0) += cx;
      g.at(i, 0) -= cx;
      g.at(i + 1, 1) += cy;
      g.at(i, 1) -= cy;
    }

    // curv (second differences)
    for (std::size_t i = 0; i + 2 < T; ++i) {
      Vec2 a0 = seg(y, i), a1 = seg(y, i + 1), b0 = seg(yhat, i), b1 = seg(yhat, i + 1);
      double dx = (a1.x - a0.x) - (b1.x - b0.x);
      double dy = (a1.y - a0.y) - (b1.y - b0.y);
      double cx = coef(2) * dx / (tn - 2.0);
      double cy = coef(2) * dy / (tn - 2.0);
      g.at(i, 0) += cx;
      g.at(i + 1, 0) -= 2.0 * cx;
      g.at(i + 2, 0) += cx;
      g.at(i, 1) += cy;
      g.at(i + 1, 1) -= 2.0 * cy;
      g.at(i + 2, 1) += cy;
    }

    // speed
    for (std::size_t i = 0; i + 1 < T; ++i) {
      Vec2 va = seg(y, i), vb = seg(yhat, i);
      double na = vnorm(va);
      if (na == 0.0) continue;  // subgradient 0 at a zero-length segment
      double c = 2.0 * coef(3) * (na - vnorm(vb)) / (tn - 1.0);
      double ux = va.x / na, uy = va.y / na;
      g.at(i + 1, 0) += c * ux;
      g.at(i, 0) -= c * ux;
      g.at(i + 1, 1) += c * uy;
      g.at(i, 1) -= c * uy;
    }

    // turn
    {
      auto thy = turn_angles(y), thh = turn_angles(yhat);
      for (std::size_t i = 0; i + 2 < T; ++i) {
        Vec2 v0 = seg(y, i), v1 = seg(y, i + 1);
        double n0 = vnorm(v0), n1 = vnorm(v1);
        double den = n0 * n1 + kEpsNum;
        double araw = vdot(v0, v1) / den;
        if (std::abs(araw) >= kArccosClip) continue;  // clipped: zero gradient
        double dtheta_da = -1.0 / std::sqrt(1.0 - araw * araw);
        double c = 2.0 * coef(4) * (thy[i] - thh[i]) * dtheta_da / (tn - 2.0);
        // da/dv0 and da/dv1
        double nd = vdot(v0, v1);
        Vec2 da0{v1.x / den - nd * n1 * v0.x / (n0 * den * den),
                 v1.y / den - nd * n1 * v0.y / (n0 * den * den)};
        Vec2 da1{v0.x / den - nd * n0 * v1.x / (n1 * den * den),
                 v0.y / den - nd * n0 * v1.y / (n1 * den * den)};
        // v0 = y_{i+1}-y_i, v1 = y_{i+2}-y_{i+1}
        g.at(i + 1, 0) += c * da0.x;
        g.at(i, 0) -= c * da0.x;
        g.at(i + 1, 1) += c * da0.y;
        g.at(i, 1) -= c * da0.y;
        g.at(i + 2, 0) += c * da1.x;
        g.at(i + 1, 0) -= c * da1.x;
        g.at(i + 2, 1) += c * da1.y;
        g.at(i + 1, 1) -= c * da1.y;
      }
    }

    // len: q = t_len^2, dq = 2 t_len * sign(L(y)-L(yhat)) * dL/dy
    {
      double diff = path_length(y) - path_length(yhat);
      if (diff != 0.0) {
        double c = 2.0 * coef(5) * t[5] * (diff > 0 ? 1.0 : -1.0);
        for (std::size_t i = 0; i + 1 < T; ++i) {
          Vec2 v = seg(y, i);
          double n = vnorm(v);
          if (n == 0.0) continue;
          g.at(i + 1, 0) += c * v.x / n;
          g.at(i, 0) -= c * v.x / n;
          g.at(i + 1, 1) += c * v.y / n;
          g.at(i, 1) -= c * v.y / n;
        }
      }
    }

    double scale = 1.0 / (2.0 * s * (wsum + kEpsNum));
    for (double& v : g.data) v *= scale;
    return checked(std::move(g));
  }

 private:
  CgtParams p_;
};

}  // namespace

// --- factories ---

ScorePtr make_l2_score() { return std::make_shared<L2Score>(); }
ScorePtr make_l1_score() { return std::make_shared<L1Score>(); }
ScorePtr make_huber_score(double delta) { return std::make_shared<HuberScore>(delta); }

ScorePtr make_knn_score(const ResidualBank& bank, int k) {
  return std::make_shared<KnnScore>(bank.residuals, k);
}

ScorePtr make_gauss_nll_score(Tensor mu, Tensor sigma2) {
  return std::make_shared<GaussNllScore>(std::move(mu), std::move(sigma2));
}

ScorePtr make_student_t_nll_score(double nu, Tensor mu, Tensor sigma2) {
  return std::make_shared<StudentTNllScore>(nu, std::move(mu), std::move(sigma2));
}

namespace {

std::pair<Tensor, Tensor> residual_moments(const ResidualBank& bank, double eps) {
  if (bank.residuals.size() < 2)
    throw std::invalid_argument("fit: need at least 2 residuals");
  const Tensor& first = bank.residuals.front();
  Tensor mu = Tensor::zeros(first.shape);
  for (const Tensor& r : bank.residuals) axpy(1.0, r, mu);
  double inv_n = 1.0 / static_cast<double>(bank.residuals.size());
  for (double& v : mu.data) v *= inv_n;
  Tensor var = Tensor::zeros(first.shape);
  for (const Tensor& r : bank.residuals)
    for (std::size_t i = 0; i < var.numel(); ++i) {
      double z = r.data[i] - mu.data[i];
      var.data[i] += z * z;
    }
  for (double& v : var.data) v = std::max(v * inv_n, eps);  // population variance
  return {std::move(mu), std::move(var)};
}

}  // namespace

ScorePtr fit_gauss_nll(const ResidualBank& bank, double eps) {
  auto [mu, var] = residual_moments(bank, eps);
  return make_gauss_nll_score(std::move(mu), std::move(var));
}

ScorePtr fit_student_t_nll(const ResidualBank& bank, double nu, double eps) {
  if (nu <= 2.0) throw std::invalid_argument("student-t fit: nu must be > 2");
  auto [mu, var] = residual_moments(bank, eps);
  for (double& v : var.data) v = std::max(v * (nu - 2.0) / nu, eps);
  return make_student_t_nll_score(nu, std::move(mu), std::move(var));
}

ScorePtr make_field_l2_score() { return std::make_shared<FieldL2Score>(); }
ScorePtr make_sobolev_score(double lambda_sob) {
  return std::make_shared<SobolevScore>(lambda_sob);
}
ScorePtr make_psd_score() { return std::make_shared<PsdScore>(); }
ScorePtr make_wavelet_score(int depth) { return std::make_shared<WaveletScore>(depth); }

ScorePtr make_combo_max_score(double kappa_sob, double kappa_psd, double lambda_sob) {
  return std::make_shared<ComboMaxScore>(kappa_sob, kappa_psd, lambda_sob);
}

ScorePtr make_local_combined_score(const LocalCombinedParams& p) {
  return std::make_shared<LocalCombinedScore>(p);
}

double local_l2_term(const Tensor& yhat, const Tensor& y) {
  require_same_shape(yhat, y);
  double ss = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    double r = y.data[i] - yhat.data[i];
    ss += r * r;
  }
  return std::sqrt(ss / static_cast<double>(y.numel()) + kEpsNum);
}

double local_spec_term(const Tensor& yhat, const Tensor& y) {
  require_same_shape(yhat, y);
  FieldDims d = field_dims(y);
  return std::sqrt(spec_distance(yhat, y, d) + kEpsNum);
}

ScorePtr make_traj_l2_score() { return std::make_shared<TrajL2Score>(); }

ScorePtr make_cgt_score(const CgtParams& p) { return std::make_shared<CgtScore>(p); }

std::vector<double> cgt_terms(const Tensor& yhat, const Tensor& y) {
  return cgt_terms_impl(yhat, y);
}

std::vector<double> fit_mad_scales(const std::vector<std::vector<double>>& terms,
                                   double eps) {
  std::vector<double> kappas;
  kappas.reserve(terms.size());
  for (const auto& col : terms) {
    if (col.size() < 2) throw std::invalid_argument("fit_mad_scales: need n >= 2");
    double m = mad(col);
    kappas.push_back(m > 0 ? m + eps : eps);
  }
  return kappas;
}

std::vector<double> fit_median_scales(const std::vector<std::vector<double>>& terms) {
  std::vector<double> kappas;
  kappas.reserve(terms.size());
  for (const auto& col : terms) {
    if (col.size() < 2) throw std::invalid_argument("fit_median_scales: need n >= 2");
    kappas.push_back(median(col));
  }
  return kappas;
}

}  // namespace conflow
