#include "conflow/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace conflow {

double weighted_quantile(const std::vector<double>& values,
                         const std::vector<double>& weights, double level) {
  if (values.empty()) throw std::invalid_argument("weighted_quantile: empty input");
  if (weights.size() != values.size())
    throw std::invalid_argument("weighted_quantile: length mismatch");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("weighted_quantile: level outside (0,1)");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("weighted_quantile: negative weight");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("weighted_quantile: zero total weight");

  std::vector<std::size_t> idx(values.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  double cum = 0.0;
  for (std::size_t i : idx) {
    cum += weights[i] / total;
    if (cum >= level) return values[i];
  }
  return values[idx.back()];  // float accumulation shortfall
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::size_t n = values.size();
  std::sort(values.begin(), values.end());
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mad(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mad: empty input");
  double m = median(std::vector<double>(values));
  std::vector<double> dev(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) dev[i] = std::abs(values[i] - m);
  return median(std::move(dev));
}

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw std::invalid_argument("fft: size not a power of two");
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = a[i + k];
        std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

namespace {

void fft2_inplace(std::vector<std::complex<double>>& a, std::size_t h, std::size_t w,
                  bool inverse) {
  std::vector<std::complex<double>> row(w), col(h);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) row[j] = a[i * w + j];
    fft(row, inverse);
    for (std::size_t j = 0; j < w; ++j) a[i * w + j] = row[j];
  }
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t i = 0; i < h; ++i) col[i] = a[i * w + j];
    fft(col, inverse);
    for (std::size_t i = 0; i < h; ++i) a[i * w + j] = col[i];
  }
}

void check_pow2_dims(std::size_t h, std::size_t w) {
  if (!is_power_of_two(h) || !is_power_of_two(w))
    throw std::invalid_argument("fft2: dimensions must be powers of two");
}

}  // namespace

std::vector<std::complex<double>> fft2(const Tensor& field) {
  if (field.shape.size() != 2) throw std::invalid_argument("fft2: expected H x W tensor");
  std::size_t h = field.shape[0], w = field.shape[1];
  check_pow2_dims(h, w);
  std::vector<std::complex<double>> a(h * w);
  for (std::size_t i = 0; i < h * w; ++i) a[i] = field.data[i];
  fft2_inplace(a, h, w, false);
  return a;
}

Tensor ifft2_real(std::vector<std::complex<double>> freq, std::size_t h, std::size_t w) {
  check_pow2_dims(h, w);
  fft2_inplace(freq, h, w, true);
  Tensor out = Tensor::zeros({h, w});
  for (std::size_t i = 0; i < h * w; ++i) out.data[i] = freq[i].real();
  return out;
}

Tensor fft2_adjoint_real(const std::vector<std::complex<double>>& freq, std::size_t h,
                         std::size_t w) {
  // F^H z = conj(F conj(z)); unnormalized
  std::vector<std::complex<double>> a(freq.size());
  for (std::size_t i = 0; i < freq.size(); ++i) a[i] = std::conj(freq[i]);
  fft2_inplace(a, h, w, false);
  Tensor out = Tensor::zeros({h, w});
  for (std::size_t i = 0; i < h * w; ++i) out.data[i] = a[i].real();
  return out;
}

Tensor fft2_power(const Tensor& field) {
  auto a = fft2(field);
  Tensor out = Tensor::zeros({field.shape[0], field.shape[1]});
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = std::norm(a[i]);
  return out;
}

// --- db2 wavelet ---

namespace {

// standard four-tap Daubechies-2 analysis filters
const double kSqrt3 = 1.7320508075688772;
const double kDb2H[4] = {(1.0 + kSqrt3) / (4.0 * std::numbers::sqrt2),
                         (3.0 + kSqrt3) / (4.0 * std::numbers::sqrt2),
                         (3.0 - kSqrt3) / (4.0 * std::numbers::sqrt2),
                         (1.0 - kSqrt3) / (4.0 * std::numbers::sqrt2)};
const double kDb2G[4] = {kDb2H[3], -kDb2H[2], kDb2H[1], -kDb2H[0]};

// periodic single-level analysis of a length-n signal (n even)
void dwt1(const double* x, std::size_t n, std::size_t stride, double* lo, double* hi,
          std::size_t out_stride) {
  std::size_t half = n / 2;
  for (std::size_t k = 0; k < half; ++k) {
    double a = 0.0, d = 0.0;
    for (std::size_t m = 0; m < 4; ++m) {
      double v = x[((2 * k + m) % n) * stride];
      a += kDb2H[m] * v;
      d += kDb2G[m] * v;
    }
    lo[k * out_stride] = a;
    hi[k * out_stride] = d;
  }
}

// periodic single-level synthesis (adjoint of dwt1)
void idwt1(const double* lo, const double* hi, std::size_t half, std::size_t in_stride,
           double* x, std::size_t stride) {
  std::size_t n = 2 * half;
  for (std::size_t i = 0; i < n; ++i) x[i * stride] = 0.0;
  for (std::size_t k = 0; k < half; ++k) {
    double a = lo[k * in_stride];
    double d = hi[k * in_stride];
    for (std::size_t m = 0; m < 4; ++m) {
      x[((2 * k + m) % n) * stride] += kDb2H[m] * a + kDb2G[m] * d;
    }
  }
}

}  // namespace

Dwt2Pyramid dwt2(const Tensor& field, int depth) {
  if (field.shape.size() != 2) throw std::invalid_argument("dwt2: expected H x W tensor");
  if (depth < 1) throw std::invalid_argument("dwt2: depth must be >= 1");
  std::size_t h = field.shape[0], w = field.shape[1];
  std::size_t div = std::size_t{1} << depth;
  if (h % div != 0 || w % div != 0 || h / div == 0 || w / div == 0)
    throw std::invalid_argument("dwt2: dimensions not divisible by 2^depth");

  Dwt2Pyramid pyr;
  Tensor cur = field;
  for (int j = 0; j < depth; ++j) {
    std::size_t ch = cur.shape[0], cw = cur.shape[1];
    std::size_t hh = ch / 2, hw = cw / 2;
    // rows first: split width into low/high halves
    Tensor rows = Tensor::zeros({ch, cw});
    for (std::size_t i = 0; i < ch; ++i) {
      dwt1(&cur.data[i * cw], cw, 1, &rows.data[i * cw], &rows.data[i * cw + hw], 1);
    }
    // then columns on each half
    Tensor ll = Tensor::zeros({hh, hw}), lh = Tensor::zeros({hh, hw});
    Tensor hl = Tensor::zeros({hh, hw}), hd = Tensor::zeros({hh, hw});
    for (std::size_t jcol = 0; jcol < hw; ++jcol) {
      dwt1(&rows.data[jcol], ch, cw, &ll.data[jcol], &lh.data[jcol], hw);
      dwt1(&rows.data[hw + jcol], ch, cw, &hl.data[jcol], &hd.data[jcol], hw);
    }
    pyr.levels.push_back(Dwt2Level{std::move(hl), std::move(lh), std::move(hd)});
    cur = std::move(ll);
  }
  pyr.approx = std::move(cur);
  return pyr;
}

Tensor idwt2(const Dwt2Pyramid& pyr) {
  Tensor cur = pyr.approx;
  for (std::size_t lvl = pyr.levels.size(); lvl-- > 0;) {
    const Dwt2Level& L = pyr.levels[lvl];
    std::size_t hh = cur.shape[0], hw = cur.shape[1];
    std::size_t ch = 2 * hh, cw = 2 * hw;
    // columns first (inverse of the analysis order)
    Tensor rows = Tensor::zeros({ch, cw});
    for (std::size_t jcol = 0; jcol < hw; ++jcol) {
      idwt1(&cur.data[jcol], &L.cv.data[jcol], hh, hw, &rows.data[jcol], cw);
      idwt1(&L.ch.data[jcol], &L.cd.data[jcol], hh, hw, &rows.data[hw + jcol], cw);
    }
    Tensor out = Tensor::zeros({ch, cw});
    for (std::size_t i = 0; i < ch; ++i) {
      idwt1(&rows.data[i * cw], &rows.data[i * cw + hw], hw, 1, &out.data[i * cw], 1);
    }
    cur = std::move(out);
  }
  return cur;
}

Tensor resize(const Tensor& field, std::size_t out_h, std::size_t out_w, ResizeMode mode) {
  if (field.shape.size() != 2) throw std::invalid_argument("resize: expected H x W tensor");
  if (out_h == 0 || out_w == 0) throw std::invalid_argument("resize: zero output dimension");
  std::size_t h = field.shape[0], w = field.shape[1];
  Tensor out = Tensor::zeros({out_h, out_w});
  if (mode == ResizeMode::Nearest) {
    for (std::size_t i = 0; i < out_h; ++i) {
      std::size_t si = i * h / out_h;
      for (std::size_t j = 0; j < out_w; ++j) {
        std::size_t sj = j * w / out_w;
        out.at(i, j) = field.at(si, sj);
      }
    }
  } else {
    for (std::size_t i = 0; i < out_h; ++i) {
      double fi = (out_h == 1) ? 0.0
                               : static_cast<double>(i) * static_cast<double>(h - 1) /
                                     static_cast<double>(out_h - 1);
      std::size_t i0 = static_cast<std::size_t>(fi);
      std::size_t i1 = std::min(i0 + 1, h - 1);
      double ti = fi - static_cast<double>(i0);
      for (std::size_t j = 0; j < out_w; ++j) {
        double fj = (out_w == 1) ? 0.0
                                 : static_cast<double>(j) * static_cast<double>(w - 1) /
                                       static_cast<double>(out_w - 1);
        std::size_t j0 = static_cast<std::size_t>(fj);
        std::size_t j1 = std::min(j0 + 1, w - 1);
        double tj = fj - static_cast<double>(j0);
        out.at(i, j) = (1 - ti) * ((1 - tj) * field.at(i0, j0) + tj * field.at(i0, j1)) +
                       ti * ((1 - tj) * field.at(i1, j0) + tj * field.at(i1, j1));
      }
    }
  }
  return out;
}

}  // namespace conflow
