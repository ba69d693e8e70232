#pragma once

#include <complex>
#include <vector>

#include "conflow/tensor.hpp"

namespace conflow {

// --- robust statistics / quantiles ---

// Weighted empirical quantile: sort (value, weight) ascending by value
// (stable on ties), return the first value whose cumulative normalized
// weight reaches `level`. Weights must be nonnegative with positive sum.
double weighted_quantile(const std::vector<double>& values,
                         const std::vector<double>& weights, double level);

double median(std::vector<double> values);

// median absolute deviation: median(|v - median(v)|)
double mad(const std::vector<double>& values);

// --- radix-2 FFT ---

bool is_power_of_two(std::size_t n);

// In-place radix-2 complex FFT; inverse applies the 1/n factor.
void fft(std::vector<std::complex<double>>& a, bool inverse);

// 2-D DFT of an H x W real field (H, W powers of two).
std::vector<std::complex<double>> fft2(const Tensor& field);

// Inverse 2-D DFT (with 1/(H*W)); returns the real part.
Tensor ifft2_real(std::vector<std::complex<double>> freq, std::size_t h,
                  std::size_t w);

// Adjoint of fft2 (conjugate transpose, no normalization); real part.
// Used for chain rules through spectral scores.
Tensor fft2_adjoint_real(const std::vector<std::complex<double>>& freq,
                         std::size_t h, std::size_t w);

// Squared modulus of the 2-D DFT. Parseval: sum(power)/(H*W) == sum(field^2).
Tensor fft2_power(const Tensor& field);

// --- db2 discrete wavelet transform, periodic boundaries ---

struct Dwt2Level {
  Tensor ch, cv, cd;  // horizontal / vertical / diagonal details
};

struct Dwt2Pyramid {
  Tensor approx;                 // coarsest LL band
  std::vector<Dwt2Level> levels; // levels[0] is the finest scale
};

// Separable db2 analysis to the given depth; H, W divisible by 2^depth.
Dwt2Pyramid dwt2(const Tensor& field, int depth);

// Perfect-reconstruction synthesis (adjoint of the orthogonal analysis).
Tensor idwt2(const Dwt2Pyramid& pyr);

// --- resampling ---

enum class ResizeMode { Nearest, Bilinear };

// Nearest maps output (i,j) to input (floor(i*H/out_h), floor(j*W/out_w));
// bilinear uses corner-aligned sample positions.
Tensor resize(const Tensor& field, std::size_t out_h, std::size_t out_w,
              ResizeMode mode);

}  // namespace conflow
