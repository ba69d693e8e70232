#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "conflow/rng.hpp"
#include "conflow/scores.hpp"

using namespace conflow;

namespace {

Tensor randn(const std::vector<std::size_t>& shape, RngStream& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

// central finite differences against the analytic gradient
double grad_rel_error(const Score& s, const Tensor& yhat, const Tensor& y,
                      double h = 1e-5) {
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

void check_gradients(const Score& s, const std::vector<std::size_t>& shape,
                     std::uint64_t seed, int points = 100, double scale = 1.0) {
  RngStream rng(seed, 0);
  for (int k = 0; k < points; ++k) {
    Tensor yhat = randn(shape, rng, scale);
    Tensor y = randn(shape, rng, scale);
    CHECK(grad_rel_error(s, yhat, y) < 1e-5);
  }
}

ResidualBank small_bank(std::size_t n, const std::vector<std::size_t>& shape,
                        std::uint64_t seed) {
  RngStream rng(seed, 1);
  ResidualBank b;
  for (std::size_t i = 0; i < n; ++i) b.residuals.push_back(randn(shape, rng));
  return b;
}

}  // namespace

TEST_CASE("l2 hand values") {
  auto s = make_l2_score();
  Tensor yhat({0.0, 0.0}, {2});
  Tensor y({3.0, 4.0}, {2});
  CHECK(s->eval(yhat, y) == doctest::Approx(3.535534).epsilon(1e-6));
  Tensor a({0.0}, {1}), b({2.0}, {1});
  CHECK(s->grad(a, b).data[0] == doctest::Approx(1.0));
  CHECK_THROWS_AS(s->grad(a, a), DegenerateGradient);
}

TEST_CASE("l1 value and sign gradient") {
  auto s = make_l1_score();
  Tensor yhat({0.0, 0.0}, {2});
  Tensor y({3.0, -4.0}, {2});
  CHECK(s->eval(yhat, y) == doctest::Approx(3.5));
  Tensor g = s->grad(yhat, y);
  CHECK(g.data[0] == doctest::Approx(0.5));
  CHECK(g.data[1] == doctest::Approx(-0.5));
}

TEST_CASE("huber hand value") {
  auto s = make_huber_score(1.0);
  Tensor yhat({0.0, 0.0}, {2});
  Tensor y({0.5, 2.0}, {2});
  CHECK(s->eval(yhat, y) == doctest::Approx(0.8125));
}

TEST_CASE("gauss nll at the mode") {
  Tensor mu({0.0, 0.0}, {2});
  Tensor s2({1.0, 1.0}, {2});
  auto s = make_gauss_nll_score(mu, s2);
  Tensor z({0.0, 0.0}, {2});
  CHECK(s->eval(z, z) == doctest::Approx(std::log(2.0 * std::numbers::pi)).epsilon(1e-9));
  CHECK(s->eval(z, z) == doctest::Approx(1.837877).epsilon(1e-6));
}

TEST_CASE("gauss nll fit floors the variance on degenerate residuals") {
  ResidualBank b;
  b.residuals.assign(3, Tensor::zeros({2}));
  auto s = fit_gauss_nll(b);
  Tensor z = Tensor::zeros({2});
  CHECK(s->eval(z, z) ==
        doctest::Approx(std::log(2.0 * std::numbers::pi * kEpsNum)).epsilon(1e-9));
}

TEST_CASE("student t fit applies the (nu-2)/nu moment factor") {
  // residuals with known population variance 1 at every coordinate
  ResidualBank b;
  b.residuals.push_back(Tensor({1.0}, {1}));
  b.residuals.push_back(Tensor({-1.0}, {1}));
  auto s3 = fit_student_t_nll(b, 3.0);
  auto g3 = fit_gauss_nll(b);
  // at a residual of z the t3 quadratic term is z^2/(1/3) = 3 z^2
  Tensor zero({0.0}, {1}), z({2.0}, {1});
  double q = 2.0 * 2.0 / (1.0 / 3.0);
  double expected = -(std::lgamma(2.0) - std::lgamma(1.5) -
                      0.5 * std::log(3.0 * std::numbers::pi) -
                      0.5 * std::log(1.0 / 3.0) - 2.0 * std::log1p(q / 3.0));
  CHECK(s3->eval(zero, z) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(g3->eval(zero, z) > 0.0);  // both defined, different families
}

TEST_CASE("knn score is the mean squared distance to the k nearest residuals") {
  ResidualBank b;
  b.residuals.push_back(Tensor({0.0}, {1}));
  b.residuals.push_back(Tensor({1.0}, {1}));
  b.residuals.push_back(Tensor({10.0}, {1}));
  auto s = make_knn_score(b, 2);
  Tensor yhat({0.0}, {1}), y({0.5}, {1});
  // two nearest residuals of r=0.5 are 0 and 1, squared distances 0.25 each
  CHECK(s->eval(yhat, y) == doctest::Approx(0.25));
  CHECK_THROWS_AS(make_knn_score(b, 4), std::invalid_argument);
}

TEST_CASE("field scores vanish at zero residual") {
  RngStream rng(21, 0);
  Tensor y = randn({8, 8}, rng);
  CHECK(make_field_l2_score()->eval(y, y) == 0.0);
  CHECK(make_sobolev_score()->eval(y, y) == 0.0);
  CHECK(make_psd_score()->eval(y, y) == 0.0);
  CHECK(make_wavelet_score()->eval(y, y) == 0.0);
}

TEST_CASE("field l2 of a unit residual is 1") {
  Tensor yhat = Tensor::zeros({2, 2});
  Tensor y = Tensor::zeros({2, 2});
  for (double& v : y.data) v = 1.0;
  CHECK(make_field_l2_score()->eval(yhat, y) == doctest::Approx(1.0));
}

TEST_CASE("sobolev penalizes gradients beyond plain l2") {
  // constant residual: H1 term vanishes, score equals field RMS
  Tensor yhat = Tensor::zeros({4, 4});
  Tensor flat = Tensor::zeros({4, 4});
  for (double& v : flat.data) v = 2.0;
  CHECK(make_sobolev_score()->eval(yhat, flat) == doctest::Approx(2.0));
  // oscillating residual of the same RMS scores strictly higher
  Tensor osc = Tensor::zeros({4, 4});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) osc.at(i, j) = ((i + j) % 2 == 0) ? 2.0 : -2.0;
  CHECK(make_sobolev_score()->eval(yhat, osc) > 2.0);
}

TEST_CASE("psd is invariant to spatial shifts of the candidate") {
  RngStream rng(22, 0);
  Tensor yhat = randn({8, 8}, rng);
  Tensor y = randn({8, 8}, rng);
  Tensor shifted = Tensor::zeros({8, 8});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) shifted.at(i, j) = y.at((i + 3) % 8, (j + 5) % 8);
  auto s = make_psd_score();
  CHECK(s->eval(yhat, y) == doctest::Approx(s->eval(yhat, shifted)).epsilon(1e-9));
}

TEST_CASE("combo max with unit scales is the max of its parts") {
  RngStream rng(23, 0);
  Tensor yhat = randn({8, 8}, rng);
  Tensor y = randn({8, 8}, rng);
  double sob = make_sobolev_score()->eval(yhat, y);
  double psd = make_psd_score()->eval(yhat, y);
  double combo = make_combo_max_score(1.0, 1.0)->eval(yhat, y);
  CHECK(combo == doctest::Approx(std::max(sob / (1.0 + kEpsNum), psd / (1.0 + kEpsNum)))
                     .epsilon(1e-12));
}

TEST_CASE("cgt terms at zero residual collapse to the numerical floor") {
  RngStream rng(24, 0);
  Tensor y = Tensor::zeros({12, 2});
  double px = 0, py = 0;
  for (std::size_t t = 0; t < 12; ++t) {
    px += 1.0 + 0.1 * rng.normal();
    py += 0.5 + 0.1 * rng.normal();
    y.at(t, 0) = px;
    y.at(t, 1) = py;
  }
  auto terms = cgt_terms(y, y);
  for (int k = 0; k < 5; ++k) CHECK(terms[k] == doctest::Approx(1e-4).epsilon(1e-9));
  CHECK(terms[5] == 0.0);
  CgtParams p;
  double total = make_cgt_score(p)->eval(y, y);
  CHECK(total == doctest::Approx(std::sqrt(5e-8 / (6.0 + kEpsNum))).epsilon(1e-9));
  CHECK(total == doctest::Approx(9.13e-5).epsilon(1e-3));
}

TEST_CASE("cgt on a shifted straight line isolates the position term") {
  const std::size_t T = 10;
  Tensor a = Tensor::zeros({T, 2}), b = Tensor::zeros({T, 2});
  for (std::size_t t = 0; t < T; ++t) {
    a.at(t, 0) = static_cast<double>(t);
    b.at(t, 0) = static_cast<double>(t) + 1.0;
  }
  auto terms = cgt_terms(a, b);
  CHECK(terms[0] == doctest::Approx(std::sqrt(0.5 + kEpsNum)).epsilon(1e-9));
  for (int k = 1; k < 5; ++k) CHECK(terms[k] == doctest::Approx(1e-4).epsilon(1e-6));
  CHECK(terms[5] == 0.0);
}

TEST_CASE("mad scale fitting floors degenerate columns") {
  auto k = fit_mad_scales({{1.0, 2.0, 3.0}, {5.0, 5.0, 5.0}});
  CHECK(k[0] == doctest::Approx(1.0 + kEpsNum));
  CHECK(k[1] == doctest::Approx(kEpsNum));
  auto med = fit_median_scales({{1.0, 2.0, 9.0}});
  CHECK(med[0] == 2.0);
}

TEST_CASE("gradient suite: smooth vector families match finite differences") {
  check_gradients(*make_l2_score(), {8}, 101);
  check_gradients(*make_huber_score(0.7), {8}, 102);
  ResidualBank bank = small_bank(40, {8}, 103);
  check_gradients(*fit_gauss_nll(bank), {8}, 104);
  check_gradients(*fit_student_t_nll(bank, 4.0), {8}, 105);
}

TEST_CASE("gradient suite: field families match finite differences") {
  check_gradients(*make_field_l2_score(), {8, 8}, 106);
  check_gradients(*make_sobolev_score(), {8, 8}, 107);
  check_gradients(*make_psd_score(), {8, 8}, 108);
  check_gradients(*make_wavelet_score(3), {8, 8}, 109);
  check_gradients(*make_combo_max_score(0.8, 1.3), {8, 8}, 110);
  LocalCombinedParams p;
  p.kappa_l2 = 0.9;
  p.kappa_spec = 1.4;
  check_gradients(*make_local_combined_score(p), {8, 8}, 111);
}

TEST_CASE("gradient suite: trajectory families match finite differences") {
  check_gradients(*make_traj_l2_score(), {12, 2}, 112);
  CgtParams p;
  p.kappas = {0.9, 1.1, 0.8, 1.2, 1.0, 0.7};
  check_gradients(*make_cgt_score(p), {12, 2}, 113);
}

TEST_CASE("multichannel field scores accept H x W x C") {
  RngStream rng(30, 0);
  Tensor yhat = randn({8, 8, 2}, rng);
  Tensor y = randn({8, 8, 2}, rng);
  for (auto s : {make_field_l2_score(), make_sobolev_score(), make_psd_score(),
                 make_wavelet_score(2)}) {
    CHECK(s->eval(yhat, y) > 0.0);
    CHECK(grad_rel_error(*s, yhat, y) < 1e-5);
  }
}

TEST_CASE("shape mismatch is rejected") {
  Tensor a = Tensor::zeros({4});
  Tensor b = Tensor::zeros({5});
  CHECK_THROWS_AS(make_l2_score()->eval(a, b), std::invalid_argument);
}
