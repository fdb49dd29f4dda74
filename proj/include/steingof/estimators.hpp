#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "steingof/common.hpp"
#include "steingof/kernels.hpp"
#include "steingof/models.hpp"
#include "steingof/stein.hpp"

namespace steingof {

enum class EstimatorKind {
  mle_gaussian,
  min_ksd_closed,
  score_matching_closed,
  min_ksd_numeric
};

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::mle_gaussian;
  KernelSpec kernel = KernelSpec::gaussian_median();  // KSD-based kinds only
  int max_iter = 2000;
  double tolerance = 1e-8;
  std::optional<VectorXd> init;
};

struct EstimateResult {
  VectorXd theta;
  bool converged = true;  // false flags max_iter exhaustion, not an error
  int iterations = 0;
};

/// Coordinatewise clamp onto the family's box constraints. Idempotent.
inline VectorXd project_to_domain(const ModelFamily& family, VectorXd theta) {
  return clamp_to_box(family.domain(), std::move(theta));
}

/// Gaussian MLE: mean and the divisor-n standard deviation.
inline std::pair<double, double> mle_gaussian(const SampleBatch& samples) {
  if (samples.cols() != 1)
    throw std::invalid_argument("mle_gaussian: univariate data required");
  const auto n = samples.rows();
  if (n < 2) throw EstimationError("mle_gaussian: need at least two points");
  const double mu = samples.col(0).mean();
  const double var = (samples.col(0).array() - mu).square().mean();
  if (!(var > 0.0))
    throw EstimationError("mle_gaussian: sample has zero variance");
  return {mu, std::max(std::sqrt(var), GaussianFamily::kSigmaFloor)};
}

namespace detail {

// Per-parameter score-jacobian fields: field[c] is n x d with rows
// J(x_i)(:, c)', plus the offsets b(x_i) and divergence gradients stacked
// by row.
struct AffineFields {
  std::vector<MatrixXd> field;  // k matrices, each n x d
  MatrixXd offset;              // n x d
  MatrixXd div_grad;            // n x k
};

inline AffineFields collect_affine_fields(const ModelFamily& family,
                                          const SampleBatch& samples) {
  if (!family.is_affine())
    throw std::invalid_argument(family.name() + ": family is not affine in theta");
  const auto n = samples.rows();
  const int d = family.data_dim();
  const int k = family.param_dim();
  AffineFields f;
  f.field.assign(k, MatrixXd(n, d));
  f.offset.resize(n, d);
  f.div_grad.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const AffineScoreDecomposition dec =
        family.affine_decomposition(samples.row(i).transpose());
    for (int c = 0; c < k; ++c) f.field[c].row(i) = dec.jacobian.col(c).transpose();
    f.offset.row(i) = dec.offset.transpose();
    f.div_grad.row(i) = dec.divergence_grad.transpose();
  }
  return f;
}

inline MatrixXd kernel_matrix(const KernelSpec& spec, const SampleBatch& x) {
  if (spec.kind == KernelKind::linear) return x * x.transpose();
  const double h2 = spec.bandwidth * spec.bandwidth;
  const VectorXd sq = x.rowwise().squaredNorm();
  MatrixXd k = -2.0 * (x * x.transpose());
  k.colwise() += sq;
  k.rowwise() += sq.transpose();
  return (-k / (2.0 * h2)).array().exp().matrix();
}

// Row i holds sum_j grad_2 K(x_i, x_j).
inline MatrixXd kernel_grad2_rowsums(const KernelSpec& spec, const SampleBatch& x,
                                     const MatrixXd& kmat) {
  const auto n = x.rows();
  if (spec.kind == KernelKind::linear) return static_cast<double>(n) * x;
  const double h2 = spec.bandwidth * spec.bandwidth;
  const VectorXd rowsum = kmat.rowwise().sum();
  return (x.array().colwise() * rowsum.array()).matrix() / h2 -
         (kmat * x) / h2;
}

// Solves M y = rhs for symmetric PSD M with a condition-number guard.
inline VectorXd guarded_solve(const MatrixXd& m, const VectorXd& rhs,
                              const char* what) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
  const VectorXd& ev = eig.eigenvalues();
  const double lo = ev.minCoeff();
  const double hi = ev.maxCoeff();
  const double cond =
      lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(cond <= 1e12)) {
    std::ostringstream msg;
    msg << what << ": normal matrix singular or ill-conditioned (condition number "
        << cond << ")";
    throw EstimationError(msg.str());
  }
  return Eigen::LDLT<MatrixXd>(m).solve(rhs);
}

struct SimplexResult {
  VectorXd x;
  double fmin = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Nelder-Mead downhill simplex; stops when the simplex diameter drops below
// tol or after max_iter iterations.
inline SimplexResult nelder_mead(const std::function<double(const VectorXd&)>& f,
                                 const VectorXd& x0, double tol, int max_iter) {
  const int k = static_cast<int>(x0.size());
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, shrink = 0.5;

  std::vector<VectorXd> v(k + 1, x0);
  for (int c = 0; c < k; ++c) v[c + 1][c] += 0.1 * (1.0 + std::abs(x0[c]));
  std::vector<double> fv(k + 1);
  for (int j = 0; j <= k; ++j) fv[j] = f(v[j]);

  auto order = [&]() {
    for (int a = 1; a <= k; ++a) {
      VectorXd xa = v[a];
      double fa = fv[a];
      int b = a - 1;
      while (b >= 0 && fv[b] > fa) {
        v[b + 1] = v[b];
        fv[b + 1] = fv[b];
        --b;
      }
      v[b + 1] = std::move(xa);
      fv[b + 1] = fa;
    }
  };

  SimplexResult res;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    order();
    double diameter = 0.0;
    for (int j = 1; j <= k; ++j)
      diameter = std::max(diameter, (v[j] - v[0]).norm());
    if (diameter < tol) {
      res.converged = true;
      break;
    }

    VectorXd centroid = VectorXd::Zero(k);
    for (int j = 0; j < k; ++j) centroid += v[j];
    centroid /= k;

    const VectorXd xr = centroid + alpha * (centroid - v[k]);
    const double fr = f(xr);
    if (fr < fv[0]) {
      const VectorXd xe = centroid + gamma * (xr - centroid);
      const double fe = f(xe);
      if (fe < fr) {
        v[k] = xe;
        fv[k] = fe;
      } else {
        v[k] = xr;
        fv[k] = fr;
      }
    } else if (fr < fv[k - 1]) {
      v[k] = xr;
      fv[k] = fr;
    } else {
      const bool outside = fr < fv[k];
      const VectorXd xc =
          outside ? centroid + rho * (xr - centroid) : centroid + rho * (v[k] - centroid);
      const double fc = f(xc);
      if (fc < (outside ? fr : fv[k])) {
        v[k] = xc;
        fv[k] = fc;
      } else {
        for (int j = 1; j <= k; ++j) {
          v[j] = v[0] + shrink * (v[j] - v[0]);
          fv[j] = f(v[j]);
        }
      }
    }
  }
  order();
  res.x = v[0];
  res.fmin = fv[0];
  res.iterations = iter;
  return res;
}

}  // namespace detail

/// Closed-form minimum-KSD estimate for families affine in theta:
///   theta = -Q^{-1} c,
///   Q = sum_ij K_ij J_i' J_j,
///   c = sum_ij [K_ij J_i' b_j + J_i' grad_2 K(x_i, x_j)],
/// solved by a pivoted factorization and clamped onto the parameter box.
inline VectorXd min_ksd_closed_form(const ModelFamily& family,
                                    const KernelSpec& spec,
                                    const SampleBatch& samples) {
  if (samples.rows() < 1) throw std::invalid_argument("empty sample");
  const KernelSpec resolved = resolve_bandwidth(spec, samples);
  const int k = family.param_dim();
  const detail::AffineFields f = detail::collect_affine_fields(family, samples);
  const MatrixXd kmat = detail::kernel_matrix(resolved, samples);
  const MatrixXd kb = kmat * f.offset;
  const MatrixXd w = detail::kernel_grad2_rowsums(resolved, samples, kmat);

  MatrixXd q(k, k);
  VectorXd c(k);
  for (int a = 0; a < k; ++a) {
    const MatrixXd kfa = kmat * f.field[a];
    for (int b = a; b < k; ++b) {
      q(a, b) = f.field[b].cwiseProduct(kfa).sum();
      q(b, a) = q(a, b);
    }
    c[a] = f.field[a].cwiseProduct(kb + w).sum();
  }
  const VectorXd theta = detail::guarded_solve(q, -c, "min_ksd_closed_form");
  return project_to_domain(family, theta);
}

/// Closed-form implicit score-matching estimate for affine families:
///   theta = -(sum_i J_i' J_i)^{-1} sum_i [divergence_grad(x_i) + J_i' b(x_i)].
inline VectorXd score_matching_closed_form(const ModelFamily& family,
                                           const SampleBatch& samples) {
  if (samples.rows() < 1) throw std::invalid_argument("empty sample");
  const int k = family.param_dim();
  const detail::AffineFields f = detail::collect_affine_fields(family, samples);
  MatrixXd q(k, k);
  VectorXd rhs(k);
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      q(a, b) = f.field[a].cwiseProduct(f.field[b]).sum();
      q(b, a) = q(a, b);
    }
    rhs[a] = f.div_grad.col(a).sum() + f.field[a].cwiseProduct(f.offset).sum();
  }
  const VectorXd theta =
      detail::guarded_solve(q, -rhs, "score_matching_closed_form");
  return project_to_domain(family, theta);
}

/// Derivative-free minimum-KSD estimate: downhill simplex on the V-statistic
/// objective, box-constrained by an infinite penalty outside the domain.
/// Exhausting max_iter is reported through the converged flag, not an error.
inline EstimateResult min_ksd_numeric(const ModelFamily& family,
                                      const KernelSpec& spec,
                                      const SampleBatch& samples,
                                      const VectorXd& init, int max_iter = 2000,
                                      double tolerance = 1e-8) {
  if (samples.rows() < 1) throw std::invalid_argument("empty sample");
  const KernelSpec resolved = resolve_bandwidth(spec, samples);
  const ParameterBox box = family.domain();
  auto inside = [&](const VectorXd& theta) {
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      if (theta[i] < box.lower[i] || theta[i] > box.upper[i]) return false;
    return true;
  };
  auto objective = [&](const VectorXd& theta) -> double {
    if (!inside(theta)) return std::numeric_limits<double>::infinity();
    return v_statistic(family, theta, resolved, samples).value;
  };
  const double f0 = objective(init);
  if (!std::isfinite(f0))
    throw EstimationError("min_ksd_numeric: objective not finite at init");
  const detail::SimplexResult sr =
      detail::nelder_mead(objective, init, tolerance, max_iter);
  EstimateResult res;
  res.theta = project_to_domain(family, sr.x);
  res.converged = sr.converged;
  res.iterations = sr.iterations;
  return res;
}

/// Runs the configured estimation procedure.  A median-rule kernel bandwidth
/// is resolved from the given samples; callers that freeze the bandwidth pass
/// an already-resolved spec.
inline EstimateResult estimate(const EstimatorSpec& spec, const ModelFamily& family,
                               const SampleBatch& samples) {
  EstimateResult res;
  switch (spec.kind) {
    case EstimatorKind::mle_gaussian: {
      if (family.name() != "gaussian")
        throw std::invalid_argument("mle_gaussian applies to the (mu, sigma) family");
      const auto [mu, sigma] = mle_gaussian(samples);
      res.theta = VectorXd(2);
      res.theta << mu, sigma;
      res.theta = project_to_domain(family, res.theta);
      return res;
    }
    case EstimatorKind::min_ksd_closed:
      res.theta = min_ksd_closed_form(family, spec.kernel, samples);
      return res;
    case EstimatorKind::score_matching_closed:
      res.theta = score_matching_closed_form(family, samples);
      return res;
    case EstimatorKind::min_ksd_numeric: {
      VectorXd init;
      if (spec.init) {
        init = *spec.init;
      } else if (family.is_affine()) {
        init = min_ksd_closed_form(family, spec.kernel, samples);
      } else if (family.name() == "gaussian") {
        const auto [mu, sigma] = mle_gaussian(samples);
        init = VectorXd(2);
        init << mu, sigma;
      } else {
        init = project_to_domain(family, VectorXd::Zero(family.param_dim()));
      }
      return min_ksd_numeric(family, spec.kernel, samples, init, spec.max_iter,
                             spec.tolerance);
    }
  }
  throw std::logic_error("unknown estimator kind");
}

}  // namespace steingof
