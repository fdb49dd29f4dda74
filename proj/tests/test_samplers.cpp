#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "steingof/baselines.hpp"
#include "steingof/samplers.hpp"

using namespace steingof;
using Catch::Approx;

namespace {

// flat unnormalized density: MALA degenerates to a symmetric random walk
class FlatFamily final : public ModelFamily {
 public:
  std::string name() const override { return "flat"; }
  int param_dim() const override { return 1; }
  int data_dim() const override { return 1; }
  ParameterBox domain() const override {
    return {VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 1.0)};
  }
  VectorXd score(const VectorXd&, const VectorXd&) const override {
    return VectorXd::Zero(1);
  }
  bool has_unnorm_logdensity() const override { return true; }
  double unnorm_logdensity(const VectorXd&, const VectorXd&) const override {
    return 0.0;
  }
};

double sample_mean(const SampleBatch& x) { return x.col(0).mean(); }

double sample_var(const SampleBatch& x) {
  const double m = sample_mean(x);
  return (x.col(0).array() - m).square().sum() / (x.rows() - 1);
}

}  // namespace

TEST_CASE("MALA matches the standard normal target", "[samplers]") {
  GaussianFamily gaussian;
  VectorXd theta(2);
  theta << 0.0, 1.0;
  ChainConfig cfg;
  cfg.burn_in = 10000;
  cfg.thin = 20;
  cfg.step_size = 1.0;
  cfg.seed = 20240901;
  McmcStats stats;
  const SampleBatch x = mala_sample(gaussian, theta, cfg, 5000, &stats);
  REQUIRE(x.rows() == 5000);
  CHECK(std::abs(sample_mean(x)) < 0.05);
  CHECK(std::abs(sample_var(x) - 1.0) < 0.1);
  CHECK(stats.acceptance_rate > 0.4);
  CHECK(stats.acceptance_rate < 1.0);
}

TEST_CASE("MALA pilot adaptation lands in the optimal-scaling band", "[samplers]") {
  GaussianFamily gaussian;
  VectorXd theta(2);
  theta << 0.0, 1.0;
  ChainConfig cfg;
  cfg.burn_in = 2000;
  cfg.thin = 5;
  cfg.step_size = 0.0;  // adapt
  cfg.seed = 99;
  McmcStats stats;
  mala_sample(gaussian, theta, cfg, 2000, &stats);
  CHECK(stats.acceptance_rate >= 0.4);
  CHECK(stats.acceptance_rate <= 0.8);
  CHECK(stats.step_size > 0.0);
}

TEST_CASE("MALA with zero score accepts every proposal", "[samplers]") {
  FlatFamily flat;
  ChainConfig cfg;
  cfg.burn_in = 100;
  cfg.thin = 1;
  cfg.step_size = 0.7;
  cfg.seed = 3;
  McmcStats stats;
  const SampleBatch x = mala_sample(flat, VectorXd::Zero(1), cfg, 500, &stats);
  CHECK(stats.acceptance_rate == 1.0);
  REQUIRE(x.rows() == 500);
}

TEST_CASE("MALA is deterministic in the seed", "[samplers]") {
  KefFamily kef(2);
  VectorXd theta(2);
  theta << 10.0, -1.0;
  ChainConfig cfg;
  cfg.burn_in = 500;
  cfg.thin = 5;
  cfg.seed = 77;
  const SampleBatch a = mala_sample(kef, theta, cfg, 100);
  const SampleBatch b = mala_sample(kef, theta, cfg, 100);
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("Gibbs with decoupled coordinates draws iid standard normals",
          "[samplers]") {
  const int d = 3;
  const MatrixXd sigma = MatrixXd::Zero(d, d);
  const VectorXd g1 = VectorXd::Zero(d);
  const VectorXd g2 = VectorXd::Constant(d, -0.5);
  ChainConfig cfg;
  cfg.burn_in = 200;
  cfg.thin = 2;
  cfg.seed = 314;
  const int n = 10000;
  const SampleBatch x = gibbs_conditional_gaussian(sigma, g1, g2, cfg, n);
  REQUIRE(x.rows() == n);
  const double se_mean = 1.0 / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < d; ++j) {
    CHECK(std::abs(x.col(j).mean()) < 4 * se_mean);
    const double var =
        (x.col(j).array() - x.col(j).mean()).square().sum() / (n - 1);
    CHECK(std::abs(var - 1.0) < 4 * std::sqrt(2.0 / n));
    // per-coordinate Kolmogorov distance to the exact Gaussian marginal
    std::vector<double> col(x.col(j).data(), x.col(j).data() + n);
    CHECK(ks_statistic(col, [](double v) { return normal_cdf(v); }) <= 0.02);
  }
}

TEST_CASE("Gibbs conditional mean and variance follow the closed form",
          "[samplers]") {
  // Sigma = 0, gamma1 = 2, gamma2 = -0.5: conditionals are N(2, 1)
  const int d = 2;
  const MatrixXd sigma = MatrixXd::Zero(d, d);
  const VectorXd g1 = VectorXd::Constant(d, 2.0);
  const VectorXd g2 = VectorXd::Constant(d, -0.5);
  ChainConfig cfg;
  cfg.burn_in = 100;
  cfg.thin = 1;
  cfg.seed = 2718;
  const int n = 20000;
  const SampleBatch x = gibbs_conditional_gaussian(sigma, g1, g2, cfg, n);
  for (int j = 0; j < d; ++j) {
    CHECK(x.col(j).mean() == Approx(2.0).margin(4.0 / std::sqrt(n)));
    const double var =
        (x.col(j).array() - x.col(j).mean()).square().sum() / (n - 1);
    CHECK(var == Approx(1.0).margin(4 * std::sqrt(2.0 / n)));
  }
}

TEST_CASE("Gibbs validates the model constraints", "[samplers]") {
  const int d = 2;
  MatrixXd sigma = MatrixXd::Zero(d, d);
  ChainConfig cfg;
  VectorXd g1 = VectorXd::Zero(d);
  VectorXd g2 = VectorXd::Constant(d, -0.5);
  sigma(0, 1) = sigma(1, 0) = 0.3;  // positive interaction
  CHECK_THROWS_AS(gibbs_conditional_gaussian(sigma, g1, g2, cfg, 10),
                  std::invalid_argument);
  sigma(0, 1) = sigma(1, 0) = -0.3;
  g2[0] = 0.0;
  CHECK_THROWS_AS(gibbs_conditional_gaussian(sigma, g1, g2, cfg, 10),
                  std::invalid_argument);
}

TEST_CASE("Gibbs is deterministic in the seed", "[samplers]") {
  const int d = 4;
  auto edges = ConditionalGaussianFamily::ring_edges(d);
  ConditionalGaussianFamily family(d, edges, VectorXd::Constant(d, 2.0),
                                   VectorXd::Constant(d, -0.5),
                                   ChainConfig{200, 2, 0.0, 0});
  const VectorXd theta = VectorXd::Constant(family.param_dim(), -1.5);
  CHECK((family.sample(theta, 50, 42) - family.sample(theta, 50, 42)).norm() ==
        0.0);
  CHECK((family.sample(theta, 50, 42) - family.sample(theta, 50, 43)).norm() !=
        0.0);
}

TEST_CASE("dgp_sample: gaussian shift and degenerate mixture share a stream",
          "[samplers]") {
  DgpSpec gauss;
  gauss.kind = DgpKind::gaussian_shift;
  gauss.mu = 0.0;
  gauss.n = 500;
  const SampleBatch a = dgp_sample(gauss, 11);
  CHECK(std::abs(a.col(0).mean()) < 4.0 / std::sqrt(500.0));

  DgpSpec mix;
  mix.kind = DgpKind::gaussian_mixture;
  mix.w = 1.0;
  mix.delta = 3.0;  // ignored at w = 1
  mix.n = 500;
  CHECK((dgp_sample(mix, 11) - a).norm() == 0.0);
}

TEST_CASE("dgp_sample: student t alternative carries the stated shift",
          "[samplers]") {
  DgpSpec spec;
  spec.kind = DgpKind::student_t_shifted;
  spec.nu = 99.0;  // nearly Gaussian, shift = 0.1
  spec.n = 20000;
  const SampleBatch x = dgp_sample(spec, 5);
  CHECK(x.col(0).mean() == Approx(0.1).margin(4.0 / std::sqrt(20000.0)));
  spec.nu = -1.0;
  CHECK_THROWS_AS(dgp_sample(spec, 5), std::invalid_argument);
}

TEST_CASE("dgp_sample: generalized chi-squared", "[samplers]") {
  DgpSpec spec;
  spec.kind = DgpKind::generalized_chi2;
  spec.alpha_power = 1.0;
  spec.shift = 0.0;
  spec.n = 20000;
  const SampleBatch x = dgp_sample(spec, 321);
  CHECK(x.col(0).minCoeff() > 0.0);
  // alpha = 1, shift = 0 is the half normal with mean sqrt(2/pi)
  const double half_normal_mean = std::sqrt(2.0 / M_PI);
  const double half_normal_sd = std::sqrt(1.0 - 2.0 / M_PI);
  CHECK(x.col(0).mean() ==
        Approx(half_normal_mean)
            .margin(4 * half_normal_sd / std::sqrt(20000.0)));

  spec.alpha_power = 2.5;
  spec.shift = 1.0;
  CHECK(dgp_sample(spec, 1).col(0).minCoeff() > 0.0);

  spec.alpha_power = -1.0;
  CHECK_THROWS_AS(dgp_sample(spec, 1), std::invalid_argument);
}

TEST_CASE("dgp_sample: multiplicative local alternative", "[samplers]") {
  DgpSpec spec;
  spec.kind = DgpKind::mult_local_alt;
  spec.gamma = 0.0;
  spec.tilt = "tanh";
  spec.n = 20000;
  const SampleBatch null_draws = dgp_sample(spec, 9);
  CHECK(std::abs(null_draws.col(0).mean()) < 4.0 / std::sqrt(20000.0));

  // positive tanh tilt shifts mass to positive x
  spec.gamma = 5.0;
  const SampleBatch tilted = dgp_sample(spec, 9);
  CHECK(tilted.col(0).mean() > 0.01);

  spec.gamma = 1e9;  // >= sqrt(n)
  CHECK_THROWS_AS(dgp_sample(spec, 9), std::invalid_argument);
  spec.gamma = 1.0;
  spec.tilt = "nope";
  CHECK_THROWS_AS(dgp_sample(spec, 9), std::invalid_argument);
}

TEST_CASE("dgp_sample: additive local alternative", "[samplers]") {
  DgpSpec spec;
  spec.kind = DgpKind::add_local_alt;
  spec.n = 10000;
  spec.g_mean = 2.0;
  spec.g_sd = std::sqrt(3.0);
  spec.gamma = 0.5 * std::sqrt(static_cast<double>(spec.n));  // weight 0.5
  const SampleBatch x = dgp_sample(spec, 13);
  CHECK(x.col(0).mean() == Approx(1.0).margin(0.1));

  spec.gamma = 2.0 * std::sqrt(static_cast<double>(spec.n));
  CHECK_THROWS_AS(dgp_sample(spec, 13), std::invalid_argument);
  spec.gamma = -1.0;
  CHECK_THROWS_AS(dgp_sample(spec, 13), std::invalid_argument);
}

TEST_CASE("dgp_sample is a pure function of (spec, seed)", "[samplers]") {
  for (DgpKind kind : {DgpKind::gaussian_shift, DgpKind::student_t_shifted,
                       DgpKind::gaussian_mixture, DgpKind::generalized_chi2,
                       DgpKind::mult_local_alt, DgpKind::add_local_alt}) {
    DgpSpec spec;
    spec.kind = kind;
    spec.n = 64;
    spec.nu = 4.0;
    spec.w = 0.5;
    spec.delta = 1.0;
    spec.alpha_power = 1.5;
    spec.gamma = 2.0;
    CHECK((dgp_sample(spec, 1234) - dgp_sample(spec, 1234)).norm() == 0.0);
    CHECK((dgp_sample(spec, 1234) - dgp_sample(spec, 1235)).norm() != 0.0);
  }
}
