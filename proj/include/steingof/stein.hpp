#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "steingof/common.hpp"
#include "steingof/kernels.hpp"
#include "steingof/models.hpp"

namespace steingof {

enum class StatisticForm { V, U };

struct SteinStatistic {
  double value = 0.0;
  StatisticForm form = StatisticForm::V;
  int n = 0;
  KernelSpec kernel;
};

/// Stein kernel
///   h(x, y) = s(x)'s(y) K + s(x)' grad_y K + s(y)' grad_x K
///           + Tr(grad_x grad_y K)
/// with s the model score at theta.
inline double stein_kernel_h(const ModelFamily& family, const VectorXd& theta,
                             const KernelSpec& spec, const VectorXd& x,
                             const VectorXd& y) {
  const VectorXd sx = family.score(theta, x);
  const VectorXd sy = family.score(theta, y);
  const double k = kernel_eval(spec, x, y);
  const KernelGrads g = kernel_grads(spec, x, y);
  return sx.dot(sy) * k + sx.dot(g.grad_y) + sy.dot(g.grad_x) + g.trace;
}

namespace detail {

// h for a pair of columns of the transposed data/score matrices; xt and st
// are d x n so columns are contiguous in the hot loop.
inline double stein_h_cols(const KernelSpec& spec, const MatrixXd& xt,
                           const MatrixXd& st, Eigen::Index i, Eigen::Index j) {
  const auto d = xt.rows();
  switch (spec.kind) {
    case KernelKind::gaussian: {
      const double h2 = spec.bandwidth * spec.bandwidth;
      const VectorXd diff = xt.col(i) - xt.col(j);
      const double r2 = diff.squaredNorm();
      const double k = std::exp(-r2 / (2.0 * h2));
      const double cross = (st.col(i) - st.col(j)).dot(diff);
      return k * (st.col(i).dot(st.col(j)) + cross / h2 +
                  static_cast<double>(d) / h2 - r2 / (h2 * h2));
    }
    case KernelKind::linear:
      return st.col(i).dot(st.col(j)) * xt.col(i).dot(xt.col(j)) +
             st.col(i).dot(xt.col(i)) + st.col(j).dot(xt.col(j)) +
             static_cast<double>(d);
  }
  throw std::logic_error("unknown kernel kind");
}

// Row sums of the pair matrix. Each row i accumulates h(i,i) (when
// include_diagonal) plus twice the upper-triangle terms h(i,j), j > i, in a
// compensated sum. Rows may be computed on any worker; the final reduction
// over rows runs in index order, so the result does not depend on the
// partitioning.
inline double stein_pair_sum(const KernelSpec& spec, const MatrixXd& xt,
                             const MatrixXd& st, bool include_diagonal,
                             int threads) {
  const auto n = xt.cols();
  std::vector<double> row_sum(static_cast<std::size_t>(n), 0.0);
  parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t i) {
    KahanSum acc;
    const auto ii = static_cast<Eigen::Index>(i);
    if (include_diagonal) acc.add(stein_h_cols(spec, xt, st, ii, ii));
    for (Eigen::Index j = ii + 1; j < n; ++j)
      acc.add(2.0 * stein_h_cols(spec, xt, st, ii, j));
    row_sum[i] = acc.value();
  });
  KahanSum total;
  for (double r : row_sum) total.add(r);
  return total.value();
}

inline void check_batch(const ModelFamily& family, const SampleBatch& samples) {
  if (samples.rows() < 1) throw std::invalid_argument("empty sample");
  if (samples.cols() != family.data_dim())
    throw std::invalid_argument("sample dimension does not match the family");
  if (!samples.allFinite())
    throw std::invalid_argument("sample contains non-finite values");
}

}  // namespace detail

/// V-statistic (1/n^2) sum_{i,j} h(x_i, x_j); includes the diagonal and is
/// nonnegative up to round-off.
inline SteinStatistic v_statistic(const ModelFamily& family, const VectorXd& theta,
                                  const KernelSpec& spec, const SampleBatch& samples,
                                  int threads = 1) {
  detail::check_batch(family, samples);
  const KernelSpec resolved = resolve_bandwidth(spec, samples);
  const auto n = samples.rows();
  const MatrixXd xt = samples.transpose();
  const MatrixXd st = family.score_batch(theta, samples).transpose();
  const double sum = detail::stein_pair_sum(resolved, xt, st, true, threads);
  return SteinStatistic{sum / (static_cast<double>(n) * n), StatisticForm::V,
                        static_cast<int>(n), resolved};
}

/// U-statistic (1/(n(n-1))) sum_{i != j} h(x_i, x_j); may be negative.
inline SteinStatistic u_statistic(const ModelFamily& family, const VectorXd& theta,
                                  const KernelSpec& spec, const SampleBatch& samples,
                                  int threads = 1) {
  detail::check_batch(family, samples);
  const auto n = samples.rows();
  if (n < 2) throw std::invalid_argument("u_statistic needs n >= 2");
  const KernelSpec resolved = resolve_bandwidth(spec, samples);
  const MatrixXd xt = samples.transpose();
  const MatrixXd st = family.score_batch(theta, samples).transpose();
  const double sum = detail::stein_pair_sum(resolved, xt, st, false, threads);
  return SteinStatistic{sum / (static_cast<double>(n) * (n - 1)),
                        StatisticForm::U, static_cast<int>(n), resolved};
}

/// Linear-kernel V-statistic in O(n d^2) time:
///   T = || M + I_d ||_F^2,  M = (1/n) sum_i x_i s(x_i)'.
/// Equal to v_statistic with the linear kernel: the pair sum collapses to
/// Tr(M'M) + 2 Tr(M) + d, which is the squared Frobenius norm of M + I.
inline SteinStatistic v_statistic_linear_fast(const ModelFamily& family,
                                              const VectorXd& theta,
                                              const SampleBatch& samples) {
  detail::check_batch(family, samples);
  const auto n = samples.rows();
  const MatrixXd s = family.score_batch(theta, samples);
  const MatrixXd m =
      samples.transpose() * s / static_cast<double>(n) +
      MatrixXd::Identity(samples.cols(), samples.cols());
  return SteinStatistic{m.squaredNorm(), StatisticForm::V, static_cast<int>(n),
                        KernelSpec::linear()};
}

}  // namespace steingof
