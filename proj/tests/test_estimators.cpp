#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "steingof/estimators.hpp"
#include "steingof/samplers.hpp"

using namespace steingof;
using Catch::Approx;

namespace {

SampleBatch batch1(std::initializer_list<double> xs) {
  SampleBatch b(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) b(i++, 0) = x;
  return b;
}

std::shared_ptr<ConditionalGaussianFamily> ring_family(int d) {
  return std::make_shared<ConditionalGaussianFamily>(
      d, ConditionalGaussianFamily::ring_edges(d), VectorXd::Constant(d, 2.0),
      VectorXd::Constant(d, -0.5));
}

// normal-equation pieces recomputed from public primitives only; an
// independent oracle for min_ksd_closed_form
std::pair<MatrixXd, VectorXd> normal_equations(const ModelFamily& family,
                                               const KernelSpec& spec,
                                               const SampleBatch& x) {
  const int k = family.param_dim();
  const auto n = x.rows();
  MatrixXd q = MatrixXd::Zero(k, k);
  VectorXd c = VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto di = family.affine_decomposition(x.row(i).transpose());
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto dj = family.affine_decomposition(x.row(j).transpose());
      const double kij =
          kernel_eval(spec, x.row(i).transpose(), x.row(j).transpose());
      const KernelGrads g =
          kernel_grads(spec, x.row(i).transpose(), x.row(j).transpose());
      q += kij * di.jacobian.transpose() * dj.jacobian;
      c += kij * di.jacobian.transpose() * dj.offset +
           di.jacobian.transpose() * g.grad_y;
    }
  }
  return {q, c};
}

}  // namespace

TEST_CASE("gaussian MLE worked examples", "[estimators]") {
  const auto [mu1, sd1] = mle_gaussian(batch1({0, 2}));
  CHECK(mu1 == Approx(1.0));
  CHECK(sd1 == Approx(1.0));

  const auto [mu2, sd2] = mle_gaussian(batch1({1, 2, 3}));
  CHECK(mu2 == Approx(2.0));
  CHECK(sd2 == Approx(std::sqrt(2.0 / 3.0)));

  CHECK_THROWS_AS(mle_gaussian(batch1({3.3, 3.3})), EstimationError);
  CHECK_THROWS_AS(mle_gaussian(batch1({1})), EstimationError);
}

TEST_CASE("min-KSD closed form: Gaussian location worked example", "[estimators]") {
  GaussianLocationFamily location;
  const SampleBatch data = batch1({1, 2});
  const VectorXd theta =
      min_ksd_closed_form(location, KernelSpec::linear(), data);
  CHECK(theta[0] == Approx(1.0).epsilon(1e-12));

  // the argmin is exact: a grid over [-5, 5] never beats it
  const double best =
      v_statistic(location, theta, KernelSpec::linear(), data).value;
  CHECK(best == Approx(0.0).margin(1e-12));
  for (int g = 0; g <= 1000; ++g) {
    VectorXd t(1);
    t << -5.0 + g * 0.01;
    CHECK(v_statistic(location, t, KernelSpec::linear(), data).value >=
          best - 1e-12);
  }
}

TEST_CASE("min-KSD closed form: zero right-hand side gives zero", "[estimators]") {
  GaussianLocationFamily location;
  const SampleBatch data = batch1({-1, 1});
  const VectorXd theta =
      min_ksd_closed_form(location, KernelSpec::gaussian(1.0), data);
  CHECK(theta[0] == Approx(0.0).margin(1e-14));
}

TEST_CASE("min-KSD closed form matches the normal-equation oracle", "[estimators]") {
  auto cond = ring_family(3);
  Rng rng(41);
  SampleBatch x(40, 3);
  for (int i = 0; i < 40; ++i) x.row(i) = rng.normal_vector(3).transpose();
  const auto spec = KernelSpec::gaussian(1.3);
  const auto [q, c] = normal_equations(*cond, spec, x);
  const VectorXd direct = Eigen::LDLT<MatrixXd>(q).solve(-c);
  const VectorXd theta = min_ksd_closed_form(*cond, spec, x);
  const VectorXd clamped = project_to_domain(*cond, direct);
  CHECK((theta - clamped).cwiseAbs().maxCoeff() < 1e-9);

  // Q is a Gram-type matrix: PSD up to round-off
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(q);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-8 * q.norm());
}

TEST_CASE("min-KSD closed form: stationary point of the V-statistic",
          "[estimators]") {
  auto cond = ring_family(3);
  VectorXd theta_true(3);
  theta_true << -2.0, -3.0, -2.5;
  const SampleBatch x = cond->sample(theta_true, 500, 99);
  const KernelSpec resolved =
      resolve_bandwidth(KernelSpec::gaussian_median(), x);
  const VectorXd theta = min_ksd_closed_form(*cond, resolved, x);

  // interior solution: finite-difference gradient of the objective vanishes
  for (int i = 0; i < 3; ++i) CHECK(theta[i] < -1e-3);
  const auto [q, c] = normal_equations(*cond, resolved, x);
  const double scale = 1e-6 * (1.0 + c.norm());
  const double step = 1e-5;
  const double n2 = static_cast<double>(x.rows()) * x.rows();
  for (int i = 0; i < 3; ++i) {
    VectorXd tp = theta, tm = theta;
    tp[i] += step;
    tm[i] -= step;
    const double grad = (v_statistic(*cond, tp, resolved, x).value -
                         v_statistic(*cond, tm, resolved, x).value) /
                        (2 * step);
    CHECK(std::abs(grad) * n2 <= scale);
  }
}

TEST_CASE("min-KSD closed form reports ill-conditioned systems", "[estimators]") {
  GaussianLocationFamily location;
  // linear kernel with mean-zero data: Q = (sum x)^2 = 0
  const SampleBatch data = batch1({-1, 1});
  try {
    min_ksd_closed_form(location, KernelSpec::linear(), data);
    FAIL("expected EstimationError");
  } catch (const EstimationError& e) {
    CHECK(std::string(e.what()).find("condition number") != std::string::npos);
  }
}

TEST_CASE("score matching closed form: worked examples", "[estimators]") {
  GaussianLocationFamily location;
  CHECK(score_matching_closed_form(location, batch1({1, 2}))[0] == Approx(1.5));
  CHECK(score_matching_closed_form(location, batch1({-2, -0.5, 0.5, 2}))[0] ==
        Approx(0.0).margin(1e-14));
}

TEST_CASE("score matching matches a numeric minimizer of its objective",
          "[estimators]") {
  auto cond = ring_family(3);
  VectorXd theta_true(3);
  theta_true << -1.5, -2.0, -1.0;
  const SampleBatch x = cond->sample(theta_true, 300, 4242);
  const VectorXd closed = score_matching_closed_form(*cond, x);

  // implicit score-matching objective (1/n) sum [ 0.5 |s|^2 + div s ]
  auto objective = [&](const VectorXd& theta) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto dec = cond->affine_decomposition(x.row(i).transpose());
      const VectorXd s = dec.jacobian * theta + dec.offset;
      const double div =
          dec.divergence_grad.dot(theta) + 2.0 * cond->gamma2().sum();
      acc += 0.5 * s.squaredNorm() + div;
    }
    return acc / x.rows();
  };
  const auto res = detail::nelder_mead(objective, VectorXd::Constant(3, -1.0),
                                       1e-10, 5000);
  REQUIRE(res.converged);
  CHECK((res.x - closed).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("numeric min-KSD agrees with the closed form on affine families",
          "[estimators]") {
  GaussianLocationFamily location;
  Rng rng(808);
  SampleBatch x(60, 1);
  for (int i = 0; i < 60; ++i) x(i, 0) = 0.4 + rng.normal();
  const auto spec = KernelSpec::gaussian(1.0);
  const VectorXd closed = min_ksd_closed_form(location, spec, x);
  const EstimateResult numeric =
      min_ksd_numeric(location, spec, x, VectorXd::Zero(1));
  CHECK(numeric.converged);
  CHECK(std::abs(numeric.theta[0] - closed[0]) < 1e-4);

  // starting at the solution stays there
  const EstimateResult fixed = min_ksd_numeric(location, spec, x, closed);
  CHECK(std::abs(fixed.theta[0] - closed[0]) < 1e-6);
}

TEST_CASE("numeric min-KSD recovers (0, 1) on standard normal data",
          "[estimators]") {
  GaussianFamily gaussian;
  VectorXd truth(2);
  truth << 0.0, 1.0;
  const SampleBatch x = gaussian.sample(truth, 200, 314159);
  EstimatorSpec spec;
  spec.kind = EstimatorKind::min_ksd_numeric;
  spec.kernel = KernelSpec::gaussian_median();
  const EstimateResult res = estimate(spec, gaussian, x);
  CHECK(std::abs(res.theta[0]) < 0.3);
  CHECK(std::abs(res.theta[1] - 1.0) < 0.3);
}

TEST_CASE("numeric min-KSD requires a finite objective at init", "[estimators]") {
  GaussianFamily gaussian;
  const SampleBatch x = batch1({0.0, 1.0, 2.0});
  VectorXd bad(2);
  bad << 0.0, -1.0;  // sigma < 0 lies outside the box
  CHECK_THROWS_AS(min_ksd_numeric(gaussian, KernelSpec::gaussian(1.0), x, bad),
                  EstimationError);
}

TEST_CASE("argmin property under random perturbations", "[estimators]") {
  auto cond = ring_family(3);
  VectorXd theta_true(3);
  theta_true << -2.0, -2.0, -2.0;
  const SampleBatch x = cond->sample(theta_true, 200, 5);
  const auto spec = KernelSpec::gaussian(1.0);
  const VectorXd theta = min_ksd_closed_form(*cond, spec, x);
  const double base = v_statistic(*cond, theta, spec, x).value;
  Rng rng(6);
  int interior_trials = 0;
  for (int t = 0; t < 100; ++t) {
    VectorXd delta = rng.normal_vector(3);
    delta *= 1e-3 / delta.norm();
    const VectorXd perturbed = theta + delta;
    if ((perturbed.array() > 0.0).any()) continue;  // stay inside the domain
    ++interior_trials;
    CHECK(v_statistic(*cond, perturbed, spec, x).value >= base - 1e-14);
  }
  CHECK(interior_trials > 50);
}

TEST_CASE("estimator consistency smoke test", "[estimators]") {
  GaussianLocationFamily location;
  VectorXd truth(1);
  truth << 0.7;
  EstimatorSpec spec;
  spec.kind = EstimatorKind::min_ksd_closed;
  spec.kernel = KernelSpec::gaussian_median();
  int improved = 0;
  for (int s = 0; s < 10; ++s) {
    const SampleBatch small = location.sample(truth, 100, child_seed(77, s, "a"));
    const SampleBatch large = location.sample(truth, 1000, child_seed(77, s, "b"));
    const double err_small =
        std::abs(estimate(spec, location, small).theta[0] - truth[0]);
    const double err_large =
        std::abs(estimate(spec, location, large).theta[0] - truth[0]);
    if (err_large < err_small) ++improved;
  }
  CHECK(improved >= 8);
}

TEST_CASE("projection onto the parameter box", "[estimators]") {
  auto cond = ring_family(3);
  VectorXd inside = VectorXd::Constant(3, -0.5);
  CHECK((project_to_domain(*cond, inside) - inside).norm() == 0.0);

  VectorXd outside(3);
  outside << 0.2, -0.1, -2000.0;
  const VectorXd clamped = project_to_domain(*cond, outside);
  CHECK(clamped[0] == 0.0);
  CHECK(clamped[1] == -0.1);
  CHECK(clamped[2] == -1e3);
  CHECK((project_to_domain(*cond, clamped) - clamped).norm() == 0.0);  // idempotent

  // clamp convention on a custom one-sided box
  ParameterBox box;
  box.lower = VectorXd::Constant(1, -std::numeric_limits<double>::infinity());
  box.upper = VectorXd::Constant(1, -1e-6);
  VectorXd gamma(1);
  gamma << 0.2;
  CHECK(clamp_to_box(box, gamma)[0] == -1e-6);
}
