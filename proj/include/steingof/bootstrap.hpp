#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "steingof/common.hpp"
#include "steingof/estimators.hpp"
#include "steingof/kernels.hpp"
#include "steingof/models.hpp"
#include "steingof/stein.hpp"

namespace steingof {

enum class PValueConvention {
  paper,    ///< sum 1(T_b >= T) / B
  plus_one  ///< (1 + sum 1(T_b >= T)) / (1 + B), finite-sample valid
};

struct TestReport {
  double statistic = 0.0;
  VectorXd theta_hat;
  std::vector<double> bootstrap_stats;  // successful replicates, in order
  double p_value = 1.0;
  bool reject = false;
  int bootstrap_size = 0;       // successful replicates; p-value denominator
  int requested_bootstrap = 0;
  int failed_replicates = 0;    // discarded estimator failures on resamples
  bool excessive_failures = false;  // more than 2% of replicates discarded
  double alpha = 0.05;
  std::uint64_t seed = 0;
  double wall_time_sec = 0.0;
};

struct BootstrapOptions {
  PValueConvention convention = PValueConvention::paper;
  /// Recompute a median-rule bandwidth on every bootstrap resample instead of
  /// freezing the observed-data bandwidth (sensitivity checks only).
  bool bandwidth_per_replicate = false;
  int threads = 1;
};

/// statistic(theta, data, stat_seed) -> value. stat_seed feeds statistics
/// that draw fresh model samples internally; deterministic statistics ignore
/// it.
using StatisticFn =
    std::function<double(const VectorXd&, const SampleBatch&, std::uint64_t)>;

inline double compute_p_value(double observed, const std::vector<double>& boot,
                              PValueConvention conv) {
  if (boot.empty())
    throw std::runtime_error("p-value undefined: no bootstrap replicates");
  std::size_t count = 0;
  for (double t : boot)
    if (t >= observed) ++count;
  if (conv == PValueConvention::paper)
    return static_cast<double>(count) / static_cast<double>(boot.size());
  return static_cast<double>(count + 1) / static_cast<double>(boot.size() + 1);
}

/// Parametric-bootstrap calibration of an arbitrary statistic: fit, compute
/// the observed statistic, then B times regenerate n points from the fitted
/// model, refit, and recompute. Estimator failures on resampled data discard
/// the replicate and are counted; a failure on the observed data is fatal.
/// Replicates use counter-based child seeds, so the report is a pure function
/// of the inputs regardless of thread count.
inline TestReport bootstrap_calibrate(const StatisticFn& statistic,
                                      const ModelFamily& family,
                                      const EstimatorSpec& estimator,
                                      const SampleBatch& samples, int B,
                                      double alpha, std::uint64_t seed,
                                      const BootstrapOptions& options = {}) {
  if (B < 1) throw std::invalid_argument("bootstrap: B must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("bootstrap: alpha must lie in (0, 1)");
  if (!family.has_sampler())
    throw std::invalid_argument("bootstrap: family provides no sampler");
  if (samples.rows() < 1) throw std::invalid_argument("bootstrap: empty sample");

  const auto start = std::chrono::steady_clock::now();
  const int n = static_cast<int>(samples.rows());

  TestReport report;
  report.requested_bootstrap = B;
  report.alpha = alpha;
  report.seed = seed;

  report.theta_hat = estimate(estimator, family, samples).theta;
  report.statistic =
      statistic(report.theta_hat, samples, child_seed(seed, 0, "statistic"));

  std::vector<std::optional<double>> replicate(B);
  parallel_for(static_cast<std::size_t>(B), options.threads, [&](std::size_t b) {
    const std::uint64_t idx = b + 1;
    const SampleBatch resample =
        family.sample(report.theta_hat, n, child_seed(seed, idx, "bootstrap"));
    VectorXd theta_b;
    try {
      theta_b = estimate(estimator, family, resample).theta;
    } catch (const EstimationError&) {
      return;  // discard-and-count
    }
    replicate[b] =
        statistic(theta_b, resample, child_seed(seed, idx, "statistic"));
  });

  for (const auto& r : replicate) {
    if (r)
      report.bootstrap_stats.push_back(*r);
    else
      ++report.failed_replicates;
  }
  report.bootstrap_size = static_cast<int>(report.bootstrap_stats.size());
  report.excessive_failures = report.failed_replicates > 0.02 * B;
  report.p_value =
      compute_p_value(report.statistic, report.bootstrap_stats, options.convention);
  report.reject = report.p_value <= alpha;
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

/// The bootstrap goodness-of-fit test with the kernelized-Stein V-statistic.
/// A median-rule bandwidth (test kernel and KSD-based estimator kernel alike)
/// is computed once from the observed data and reused for the observed and
/// every resampled statistic, keeping the statistic a fixed functional across
/// the bootstrap; options.bandwidth_per_replicate reverts to per-resample
/// selection.
inline TestReport sksd_test(const ModelFamily& family,
                            const EstimatorSpec& estimator,
                            const KernelSpec& kernel, const SampleBatch& samples,
                            int B, double alpha, std::uint64_t seed,
                            const BootstrapOptions& options = {}) {
  KernelSpec stat_kernel = kernel;
  EstimatorSpec est = estimator;
  if (!options.bandwidth_per_replicate) {
    stat_kernel = resolve_bandwidth(stat_kernel, samples);
    est.kernel = resolve_bandwidth(est.kernel, samples);
  }
  StatisticFn statistic = [&family, stat_kernel](const VectorXd& theta,
                                                 const SampleBatch& data,
                                                 std::uint64_t) {
    return v_statistic(family, theta, stat_kernel, data).value;
  };
  return bootstrap_calibrate(statistic, family, est, samples, B, alpha, seed,
                             options);
}

// ---------------------------------------------------------------------------
// Neyman-orthogonalized kernel and wild-bootstrap test
// ---------------------------------------------------------------------------

/// Matrix-valued kernel
///   Kt(x,y) = K(x,y) I_d - r(x) G+ A(y)' - A(x) G+ r(y)' + r(x) G+ H G+ r(y)'
/// built from r(x) = d/dtheta score(theta, x) with moments under the fitted
/// model replaced by averages over m cached Monte-Carlo draws:
///   G = E[r(X)' r(X)],  A(x) = E[K(x, X) r(X)],  H = E[r(X)' K(X, X') r(X')].
/// G is inverted by pseudo-inverse, so a rank-deficient (or zero) jacobian
/// degrades gracefully to Kt = K I_d. The transformed feature map satisfies
/// the orthogonality E[r(X)' f~(X)] = 0 exactly under the cached empirical
/// measure.
class NeymanKernelHandle {
 public:
  NeymanKernelHandle(const ModelFamily& family, VectorXd theta_hat,
                     const KernelSpec& base, int mc_count, std::uint64_t seed)
      : family_(&family),
        theta_(std::move(theta_hat)),
        base_(base),
        m_(mc_count) {
    if (base_.needs_bandwidth())
      throw std::invalid_argument(
          "neyman kernel: resolve the bandwidth before construction");
    if (m_ < 100)
      throw std::invalid_argument("neyman kernel: need at least 100 MC draws");
    if (!family.has_param_score_jacobian())
      throw std::invalid_argument(
          "neyman kernel: family lacks a parameter score jacobian");
    if (!family.has_score_divergence_grad())
      throw std::invalid_argument(
          "neyman kernel: family lacks score divergence gradients");

    draws_ = family.sample(theta_, m_, child_seed(seed, 0, "neyman-mc"));
    const int k = family.param_dim();
    const int d = family.data_dim();
    r_draws_.reserve(m_);
    g_ = MatrixXd::Zero(k, k);
    for (int s = 0; s < m_; ++s) {
      r_draws_.push_back(
          family.param_score_jacobian(theta_, draws_.row(s).transpose()));
      g_.noalias() += r_draws_.back().transpose() * r_draws_.back();
    }
    g_ /= static_cast<double>(m_);
    g_pinv_ = pseudo_inverse(g_);

    // H = (1/m^2) sum_{s,t} r_s' K(Z_s, Z_t) r_t, accumulated row by row so
    // the m x m kernel matrix is never materialized.
    cross_ = MatrixXd::Zero(k, k);
    MatrixXd weighted(d, k);
    for (int s = 0; s < m_; ++s) {
      const VectorXd w = kernel_row(draws_.row(s).transpose(), draws_);
      weighted.setZero();
      for (int t = 0; t < m_; ++t) weighted.noalias() += w[t] * r_draws_[t];
      cross_.noalias() += r_draws_[s].transpose() * weighted;
    }
    cross_ /= static_cast<double>(m_) * m_;
  }

  const VectorXd& theta() const { return theta_; }
  const KernelSpec& base_spec() const { return base_; }
  int mc_count() const { return m_; }
  const MatrixXd& r_second_moment() const { return g_; }
  const SampleBatch& mc_draws() const { return draws_; }

  /// Kt(x, y) as a dense d x d matrix.
  MatrixXd eval(const VectorXd& x, const VectorXd& y) const {
    const int d = family_->data_dim();
    const MatrixXd rx = family_->param_score_jacobian(theta_, x);
    const MatrixXd ry = family_->param_score_jacobian(theta_, y);
    const MatrixXd ax = moment_a(x);
    const MatrixXd ay = moment_a(y);
    MatrixXd out = kernel_eval(base_, x, y) * MatrixXd::Identity(d, d);
    out.noalias() -= rx * g_pinv_ * ay.transpose();
    out.noalias() -= ax * g_pinv_ * ry.transpose();
    out.noalias() += rx * g_pinv_ * cross_ * g_pinv_ * ry.transpose();
    return out;
  }

  /// Full matrix of the orthogonalized Stein kernel
  ///   h(x_i, x_j; Kt) = s' Kt s + s' div2 Kt + div1 Kt s + div1 div2 Kt
  /// over the batch, with scores taken at `theta`. Divergences of the
  /// Monte-Carlo moment terms are evaluated analytically through the cached
  /// draws. With per-point caches each pair costs O(d + k).
  MatrixXd h_matrix(const SampleBatch& samples, const VectorXd& theta) const {
    const auto n = samples.rows();
    if (samples.cols() != family_->data_dim())
      throw std::invalid_argument("neyman kernel: sample dimension mismatch");
    const int k = family_->param_dim();

    const MatrixXd scores = family_->score_batch(theta, samples);
    // p_i = G+ (r_i' s_i + div r_i),  q_i = A_i' s_i + divA_i; the pair sum
    // collapses to  h_plain - p_i.q_j - q_i.p_j + p_i' H p_j.
    MatrixXd pvec(n, k), qvec(n, k), hp(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const VectorXd x = samples.row(i).transpose();
      const VectorXd s = scores.row(i).transpose();
      const MatrixXd r = family_->param_score_jacobian(theta_, x);
      const VectorXd div_r = family_->score_divergence_grad(theta_, x);
      const MatrixXd a = moment_a(x);
      const VectorXd div_a = moment_div_a(x);
      pvec.row(i) = (g_pinv_ * (r.transpose() * s + div_r)).transpose();
      qvec.row(i) = (a.transpose() * s + div_a).transpose();
      hp.row(i) = (cross_ * pvec.row(i).transpose()).transpose();
    }

    const MatrixXd xt = samples.transpose();
    const MatrixXd st = scores.transpose();
    MatrixXd h(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i; j < n; ++j) {
        double v = detail::stein_h_cols(base_, xt, st, i, j);
        v -= pvec.row(i).dot(qvec.row(j)) + qvec.row(i).dot(pvec.row(j));
        v += pvec.row(i).dot(hp.row(j));
        h(i, j) = v;
        h(j, i) = v;
      }
    }
    return h;
  }

 private:
  static MatrixXd pseudo_inverse(const MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
    const VectorXd& ev = eig.eigenvalues();
    const double cutoff = 1e-12 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    VectorXd inv = VectorXd::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i)
      if (ev[i] > cutoff) inv[i] = 1.0 / ev[i];
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  }

  VectorXd kernel_row(const VectorXd& x, const SampleBatch& pts) const {
    if (base_.kind == KernelKind::linear) return pts * x;
    const double h2 = base_.bandwidth * base_.bandwidth;
    return ((-(pts.rowwise() - x.transpose()).rowwise().squaredNorm() /
             (2.0 * h2))
                .array()
                .exp())
        .matrix();
  }

  // A(x) = (1/m) sum_s K(x, Z_s) r_s
  MatrixXd moment_a(const VectorXd& x) const {
    const VectorXd w = kernel_row(x, draws_);
    MatrixXd a = MatrixXd::Zero(family_->data_dim(), family_->param_dim());
    for (int s = 0; s < m_; ++s) a.noalias() += w[s] * r_draws_[s];
    return a / static_cast<double>(m_);
  }

  // divA(x) = (1/m) sum_s r_s' grad_x K(x, Z_s)
  VectorXd moment_div_a(const VectorXd& x) const {
    VectorXd out = VectorXd::Zero(family_->param_dim());
    if (base_.kind == KernelKind::linear) {
      for (int s = 0; s < m_; ++s)
        out.noalias() += r_draws_[s].transpose() * draws_.row(s).transpose();
    } else {
      const double h2 = base_.bandwidth * base_.bandwidth;
      const VectorXd w = kernel_row(x, draws_);
      for (int s = 0; s < m_; ++s) {
        const VectorXd gx = -(x - draws_.row(s).transpose()) * (w[s] / h2);
        out.noalias() += r_draws_[s].transpose() * gx;
      }
    }
    return out / static_cast<double>(m_);
  }

  const ModelFamily* family_;
  VectorXd theta_;
  KernelSpec base_;
  int m_;
  SampleBatch draws_;
  std::vector<MatrixXd> r_draws_;
  MatrixXd g_;       // E[r' r]
  MatrixXd g_pinv_;
  MatrixXd cross_;   // E[r(X)' K(X, X') r(X')]
};

/// Wild-bootstrap test with the orthogonalized kernel: the observed statistic
/// is (1/n^2) sum_ij h_ij and each resample reweights the fixed pair matrix
/// by Rademacher signs, T_b = (1/n^2) sum_ij w_i w_j h_ij. No refitting and
/// no resampling, so replicates never fail. The handle must have been built
/// at the estimate the estimator produces on `samples`.
inline TestReport neyman_sksd_test(const ModelFamily& family,
                                   const EstimatorSpec& estimator,
                                   const NeymanKernelHandle& handle,
                                   const SampleBatch& samples, int B,
                                   double alpha, std::uint64_t seed,
                                   const BootstrapOptions& options = {}) {
  if (B < 1) throw std::invalid_argument("neyman test: B must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("neyman test: alpha must lie in (0, 1)");
  const auto start = std::chrono::steady_clock::now();
  const auto n = samples.rows();

  TestReport report;
  report.requested_bootstrap = B;
  report.alpha = alpha;
  report.seed = seed;
  report.theta_hat = estimate(estimator, family, samples).theta;

  const MatrixXd h = handle.h_matrix(samples, report.theta_hat);
  const double n2 = static_cast<double>(n) * n;
  report.statistic = h.sum() / n2;

  report.bootstrap_stats.resize(B);
  parallel_for(static_cast<std::size_t>(B), options.threads, [&](std::size_t b) {
    Rng rng(child_seed(seed, b + 1, "wild"));
    VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = rng.sign();
    report.bootstrap_stats[b] = w.dot(h * w) / n2;
  });

  report.bootstrap_size = B;
  report.p_value =
      compute_p_value(report.statistic, report.bootstrap_stats, options.convention);
  report.reject = report.p_value <= alpha;
  report.wall_time_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

/// Estimates theta, builds the orthogonalized kernel at the estimate, and
/// runs the wild-bootstrap test. mc_count == 0 defaults to 10 n draws.
inline TestReport neyman_sksd_test(const ModelFamily& family,
                                   const EstimatorSpec& estimator,
                                   const KernelSpec& kernel,
                                   const SampleBatch& samples, int B,
                                   double alpha, std::uint64_t seed,
                                   int mc_count = 0,
                                   const BootstrapOptions& options = {}) {
  const KernelSpec resolved = resolve_bandwidth(kernel, samples);
  EstimatorSpec est = estimator;
  est.kernel = resolve_bandwidth(est.kernel, samples);
  const VectorXd theta = estimate(est, family, samples).theta;
  const int m =
      mc_count > 0 ? mc_count : 10 * static_cast<int>(samples.rows());
  const NeymanKernelHandle handle(family, theta, resolved, m,
                                  child_seed(seed, 0, "neyman-kernel"));
  return neyman_sksd_test(family, est, handle, samples, B, alpha, seed, options);
}

}  // namespace steingof
