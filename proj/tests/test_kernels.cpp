#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "steingof/kernels.hpp"

using namespace steingof;
using Catch::Approx;

namespace {

VectorXd vec1(double x) {
  VectorXd v(1);
  v << x;
  return v;
}

double fd_partial_x(const KernelSpec& spec, VectorXd x, const VectorXd& y,
                    Eigen::Index i, double step = 1e-5) {
  x[i] += step;
  const double up = kernel_eval(spec, x, y);
  x[i] -= 2 * step;
  const double down = kernel_eval(spec, x, y);
  return (up - down) / (2 * step);
}

double fd_partial_y(const KernelSpec& spec, const VectorXd& x, VectorXd y,
                    Eigen::Index i, double step = 1e-5) {
  y[i] += step;
  const double up = kernel_eval(spec, x, y);
  y[i] -= 2 * step;
  const double down = kernel_eval(spec, x, y);
  return (up - down) / (2 * step);
}

double fd_mixed_trace(const KernelSpec& spec, const VectorXd& x, const VectorXd& y,
                      double step = 1e-4) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x, yp = y, ym = y;
    xp[i] += step;
    xm[i] -= step;
    yp[i] += step;
    ym[i] -= step;
    acc += (kernel_eval(spec, xp, yp) - kernel_eval(spec, xp, ym) -
            kernel_eval(spec, xm, yp) + kernel_eval(spec, xm, ym)) /
           (4 * step * step);
  }
  return acc;
}

}  // namespace

TEST_CASE("kernel evaluation matches the closed forms", "[kernels]") {
  const auto g1 = KernelSpec::gaussian(1.0);
  CHECK(kernel_eval(g1, vec1(3.0), vec1(3.0)) == 1.0);
  CHECK(kernel_eval(g1, vec1(0.0), vec1(1.0)) == Approx(std::exp(-0.5)));

  VectorXd x(2), y(2);
  x << 1, 2;
  y << 3, 4;
  CHECK(kernel_eval(KernelSpec::linear(), x, y) == 11.0);
}

TEST_CASE("kernel input validation", "[kernels]") {
  VectorXd x(2), y(1);
  x << 0, 0;
  y << 0;
  CHECK_THROWS_AS(kernel_eval(KernelSpec::gaussian(1.0), x, y),
                  std::invalid_argument);
  VectorXd bad(1);
  bad << std::nan("");
  CHECK_THROWS_AS(kernel_eval(KernelSpec::gaussian(1.0), bad, vec1(0.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(KernelSpec::gaussian(0.0), std::invalid_argument);
  CHECK_THROWS_AS(kernel_eval(KernelSpec::gaussian_median(), vec1(0.0), vec1(1.0)),
                  std::invalid_argument);
}

TEST_CASE("kernel gradients: worked examples", "[kernels]") {
  const auto g1 = KernelSpec::gaussian(1.0);
  const KernelGrads g = kernel_grads(g1, vec1(0.0), vec1(1.0));
  const double k = std::exp(-0.5);
  CHECK(g.grad_x[0] == Approx(k));
  CHECK(g.grad_y[0] == Approx(-k));
  CHECK(g.trace == Approx(0.0).margin(1e-15));

  // coincident points: gradients vanish, trace is d / h^2
  for (double h : {0.5, 1.0, 2.5}) {
    VectorXd z(3);
    z << 0.3, -1.2, 4.0;
    const KernelGrads gc = kernel_grads(KernelSpec::gaussian(h), z, z);
    CHECK(gc.grad_x.norm() == 0.0);
    CHECK(gc.grad_y.norm() == 0.0);
    CHECK(gc.trace == Approx(3.0 / (h * h)));
  }

  VectorXd x(2), y(2);
  x << 1, 2;
  y << 3, 4;
  const KernelGrads gl = kernel_grads(KernelSpec::linear(), x, y);
  CHECK((gl.grad_x - y).norm() == 0.0);
  CHECK((gl.grad_y - x).norm() == 0.0);
  CHECK(gl.trace == 2.0);
}

TEST_CASE("kernel gradients agree with central finite differences", "[kernels]") {
  Rng rng(7101);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + trial % 3;
    const double h = 0.5 + 2.0 * rng.uniform();
    const KernelSpec spec = trial % 4 == 0 ? KernelSpec::linear()
                                           : KernelSpec::gaussian(h);
    const VectorXd x = rng.normal_vector(d);
    const VectorXd y = rng.normal_vector(d);
    const KernelGrads g = kernel_grads(spec, x, y);
    for (Eigen::Index i = 0; i < d; ++i) {
      CHECK(g.grad_x[i] == Approx(fd_partial_x(spec, x, y, i)).margin(1e-5));
      CHECK(g.grad_y[i] == Approx(fd_partial_y(spec, x, y, i)).margin(1e-5));
    }
    CHECK(g.trace == Approx(fd_mixed_trace(spec, x, y)).margin(1e-5));
  }
}

TEST_CASE("kernel symmetry on random pairs", "[kernels]") {
  Rng rng(90210);
  const auto g = KernelSpec::gaussian(1.3);
  const auto lin = KernelSpec::linear();
  for (int t = 0; t < 1000; ++t) {
    const VectorXd x = rng.normal_vector(2);
    const VectorXd y = rng.normal_vector(2);
    CHECK(kernel_eval(g, x, y) == kernel_eval(g, y, x));
    CHECK(kernel_eval(lin, x, y) == kernel_eval(lin, y, x));
  }
}

TEST_CASE("Gram matrices are positive semidefinite", "[kernels]") {
  Rng rng(55);
  for (int set = 0; set < 20; ++set) {
    const int n = 2 + static_cast<int>(rng.uniform() * 18);
    const int d = 1 + set % 3;
    const KernelSpec spec = set % 3 == 0
                                ? KernelSpec::linear()
                                : KernelSpec::gaussian(0.3 + 2 * rng.uniform());
    MatrixXd pts(n, d);
    for (int i = 0; i < n; ++i) pts.row(i) = rng.normal_vector(d).transpose();
    MatrixXd gram(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        gram(i, j) = kernel_eval(spec, pts.row(i).transpose(),
                                 pts.row(j).transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("median heuristic", "[kernels]") {
  SampleBatch three(3, 1);
  three << 0, 1, 2;  // pairwise distances {1, 1, 2}
  CHECK(median_heuristic(three) == 1.0);

  SampleBatch pair(2, 1);
  pair << 4.5, 4.5 + 0.75;
  CHECK(median_heuristic(pair) == Approx(0.75));

  SampleBatch degenerate(3, 1);
  degenerate << 1, 1, 1;
  CHECK_THROWS_AS(median_heuristic(degenerate), std::invalid_argument);

  SampleBatch single(1, 1);
  single << 0;
  CHECK_THROWS_AS(median_heuristic(single), std::invalid_argument);
}

TEST_CASE("median heuristic is scale equivariant", "[kernels]") {
  Rng rng(321);
  SampleBatch x(25, 2);
  for (int i = 0; i < 25; ++i) x.row(i) = rng.normal_vector(2).transpose();
  const double base = median_heuristic(x);
  for (double alpha : {0.01, 0.5, 3.0, 1234.5}) {
    const double scaled = median_heuristic(alpha * x);
    CHECK(scaled == Approx(alpha * base).epsilon(1e-12));
  }
}

TEST_CASE("resolve_bandwidth fixes the median rule once", "[kernels]") {
  SampleBatch x(3, 1);
  x << 0, 1, 2;
  const KernelSpec resolved = resolve_bandwidth(KernelSpec::gaussian_median(), x);
  CHECK(resolved.rule == BandwidthRule::fixed);
  CHECK(resolved.bandwidth == 1.0);
  // already-fixed specs pass through untouched
  const KernelSpec fixed = resolve_bandwidth(KernelSpec::gaussian(2.0), x);
  CHECK(fixed.bandwidth == 2.0);
}
