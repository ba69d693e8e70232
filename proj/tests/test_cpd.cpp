#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "conflow/cpd.hpp"

using namespace conflow;

namespace {

std::vector<double> gaussian_scores(std::size_t n, std::size_t d, const Score& s,
                                    const Tensor& yhat, std::uint64_t seed,
                                    std::vector<Tensor>* targets = nullptr) {
  RngStream rng(seed, 0);
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor y = Tensor::zeros({d});
    for (double& v : y.data) v = rng.normal();
    out.push_back(s.eval(yhat, y));
    if (targets) targets->push_back(std::move(y));
  }
  return out;
}

}  // namespace

TEST_CASE("mixing measure upper mass") {
  CHECK(MixingMeasure::uniform01().upper_mass(0.3) == doctest::Approx(0.7));
  auto ur = MixingMeasure::uniform_range(0.2, 0.6);
  CHECK(ur.upper_mass(0.4) == doctest::Approx(0.5));
  CHECK(ur.upper_mass(0.1) == doctest::Approx(1.0));
  CHECK(ur.upper_mass(0.7) == 0.0);
  auto dg = MixingMeasure::discrete({0.1, 0.5, 0.9}, {0.2, 0.3, 0.5});
  CHECK(dg.upper_mass(0.5) == doctest::Approx(0.8));
  CHECK(dg.upper_mass(0.05) == doctest::Approx(1.0));
  CHECK(dg.upper_mass(0.95) == 0.0);
}

TEST_CASE("mixing measure validation") {
  CHECK_THROWS_AS(MixingMeasure::uniform_range(0.6, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(MixingMeasure::uniform_range(-0.1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(MixingMeasure::discrete({0.5}, {0.7}), std::invalid_argument);
  CHECK_THROWS_AS(MixingMeasure::discrete({1.5}, {1.0}), std::invalid_argument);
}

TEST_CASE("discrete alpha sampling matches the masses") {
  auto dg = MixingMeasure::discrete({0.2, 0.5, 0.8}, {0.5, 0.3, 0.2});
  RngStream rng(61, 0);
  const int n = 20000;
  int c0 = 0, c1 = 0;
  for (int i = 0; i < n; ++i) {
    double a = sample_alpha(dg, rng);
    if (a == 0.2) ++c0;
    if (a == 0.5) ++c1;
  }
  CHECK(std::abs(c0 / static_cast<double>(n) - 0.5) < 3.0 * std::sqrt(0.25 / n));
  CHECK(std::abs(c1 / static_cast<double>(n) - 0.3) < 3.0 * std::sqrt(0.21 / n));
}

TEST_CASE("base measures draw from the right support") {
  Tensor yhat({1.0, 2.0}, {2});
  RngStream rng(62, 0);
  std::vector<Tensor> bank = {Tensor({5.0, 5.0}, {2}), Tensor({7.0, 7.0}, {2})};
  auto prov = BaseMeasure::provided(bank);
  for (int i = 0; i < 20; ++i) {
    Tensor y = draw_base(prov, yhat, rng);
    CHECK((y.data[0] == 5.0 || y.data[0] == 7.0));
  }
  auto gauss = BaseMeasure::gaussian(0.01);
  Tensor g = draw_base(gauss, yhat, rng);
  CHECK(std::abs(g.data[0] - 1.0) < 0.1);
  CHECK_THROWS_AS(BaseMeasure::empirical({}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(BaseMeasure::empirical(bank, -1.0), std::invalid_argument);
}

TEST_CASE("cpd samples land on their alpha level set") {
  const std::size_t d = 3;
  Tensor yhat = Tensor::zeros({d});
  auto model = make_l2_score();
  std::vector<Tensor> targets;
  auto scores = gaussian_scores(200, d, *model, yhat, 63, &targets);
  CPDSpec spec{model, Filtration(scores), BaseMeasure::empirical(targets, 0.05),
               MixingMeasure::uniform01(), FlowOptions{}};
  auto set = sample_cpd(spec, yhat, 100, 64);
  CHECK(set.failures == 0);
  for (const auto& s : set.samples) {
    CHECK(s.converged);
    CHECK(std::abs(model->eval(yhat, s.value) - s.tau) <= spec.flow.tolerance);
    CHECK(s.score == doctest::Approx(model->eval(yhat, s.value)).epsilon(1e-12));
  }
}

TEST_CASE("cpd output is independent of the parallel schedule") {
  const std::size_t d = 3;
  Tensor yhat = Tensor::zeros({d});
  auto model = make_l2_score();
  std::vector<Tensor> targets;
  auto scores = gaussian_scores(100, d, *model, yhat, 65, &targets);
  CPDSpec spec{model, Filtration(scores), BaseMeasure::empirical(targets, 0.05),
               MixingMeasure::uniform01(), FlowOptions{}};
  setenv("CONFLOW_THREADS", "1", 1);
  auto a = sample_cpd(spec, yhat, 64, 66, 1000);
  setenv("CONFLOW_THREADS", "7", 1);
  auto b = sample_cpd(spec, yhat, 64, 66, 1000);
  unsetenv("CONFLOW_THREADS");
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].alpha == b.samples[i].alpha);
    CHECK(a.samples[i].tau == b.samples[i].tau);
    CHECK(a.samples[i].value.data == b.samples[i].value.data);
  }
}

TEST_CASE("coverage audit matches the mixing mass and nests over beta") {
  const std::size_t d = 3;
  Tensor yhat = Tensor::zeros({d});
  auto model = make_l2_score();
  std::vector<Tensor> targets;
  auto scores = gaussian_scores(500, d, *model, yhat, 67, &targets);
  Filtration filt(scores);
  CPDSpec spec{model, filt, BaseMeasure::empirical(targets, 0.05),
               MixingMeasure::uniform01(), FlowOptions{}};
  const std::size_t M = 4000;
  auto set = sample_cpd(spec, yhat, M, 68);
  std::vector<double> betas = {0.1, 0.3, 0.5, 0.7, 0.9};
  auto rows = coverage_audit(set, filt, spec.mixing, betas, 2e-6);
  double prev = 1.1;
  for (const auto& r : rows) {
    CHECK(r.target == doctest::Approx(1.0 - r.beta));
    double band = 4.0 * std::sqrt(r.target * (1.0 - r.target) / M) + 0.01;
    CHECK(std::abs(r.empirical - r.target) < band);
    CHECK(r.empirical <= prev);  // nested level sets
    prev = r.empirical;
    CHECK(r.clamped_fraction < 0.01);
  }
}

TEST_CASE("clamped thresholds are excluded from the audit") {
  // n = 4 calibration points: alpha < 0.2 forces k = 5 > n
  Filtration filt(std::vector<double>{1.0, 2.0, 3.0, 4.0});
  auto model = make_l2_score();
  Tensor yhat = Tensor::zeros({2});
  std::vector<Tensor> bank = {Tensor({3.0, 3.0}, {2})};
  CPDSpec spec{model, filt, BaseMeasure::provided(bank),
               MixingMeasure::uniform_range(0.01, 0.1), FlowOptions{}};
  auto set = sample_cpd(spec, yhat, 50, 69);
  for (const auto& s : set.samples) CHECK(s.clamped);
  auto rows = coverage_audit(set, filt, spec.mixing, {0.5}, 1e-9);
  CHECK(rows[0].clamped_fraction == 1.0);
  CHECK(rows[0].empirical == 0.0);  // no usable samples
}

TEST_CASE("exhausted jitter retries are reported as failures") {
  auto model = make_l2_score();
  Tensor yhat({1.0, 1.0}, {2});
  std::vector<Tensor> bank = {yhat};  // zero residual start, degenerate gradient
  FlowOptions fo;
  fo.jitter_retries = 0;
  CPDSpec spec{model, Filtration(std::vector<double>{0.5, 1.0, 1.5}),
               BaseMeasure::provided(bank), MixingMeasure::uniform01(), fo};
  auto set = sample_cpd(spec, yhat, 10, 70);
  CHECK(set.failures == 10);
  for (const auto& s : set.samples) {
    CHECK_FALSE(s.converged);
    CHECK(s.value.data == yhat.data);  // falls back to the initial point
  }
}
