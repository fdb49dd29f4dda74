#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "steingof/common.hpp"
#include "steingof/kernels.hpp"

namespace steingof {

/// Standard normal CDF via the complementary error function (absolute error
/// well below 1e-12).
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / M_SQRT2); }

/// One-sample Kolmogorov-Smirnov distance against a model CDF:
/// max_i max(i/n - F(x_(i)), F(x_(i)) - (i-1)/n). Input is sorted internally.
inline double ks_statistic(std::vector<double> xs,
                           const std::function<double(double)>& model_cdf) {
  if (xs.empty()) throw std::invalid_argument("ks_statistic: empty sample");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = model_cdf(xs[i]);
    d = std::max(d, (i + 1) / n - f);
    d = std::max(d, f - i / n);
  }
  return d;
}

/// Wasserstein-1 distance between the data and m = n fresh model draws,
/// computed by sorted matching (optimal in one dimension):
/// (1/n) sum_i |x_(i) - y_(i)|.
inline double w1_statistic(
    std::vector<double> xs,
    const std::function<std::vector<double>(int, std::uint64_t)>& model_sampler,
    int m, std::uint64_t seed) {
  const int n = static_cast<int>(xs.size());
  if (n < 1) throw std::invalid_argument("w1_statistic: empty sample");
  if (m != n)
    throw std::invalid_argument("w1_statistic: model sample size must equal n");
  std::vector<double> ys = model_sampler(m, seed);
  if (static_cast<int>(ys.size()) != m)
    throw std::invalid_argument("w1_statistic: sampler returned wrong count");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::abs(xs[i] - ys[i]);
  return acc / n;
}

/// MMD^2 V-statistic (diagonals included):
/// mean K(x,x') + mean K(y,y') - 2 mean K(x,y).
inline double mmd_v_statistic(const SampleBatch& x, const SampleBatch& y,
                              const KernelSpec& spec) {
  if (x.rows() < 1 || y.rows() < 1)
    throw std::invalid_argument("mmd_v_statistic: empty sample");
  if (x.cols() != y.cols())
    throw std::invalid_argument("mmd_v_statistic: dimension mismatch");
  const auto n = x.rows();
  const auto m = y.rows();
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      kxx += kernel_eval(spec, x.row(i).transpose(), x.row(j).transpose());
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      kyy += kernel_eval(spec, y.row(i).transpose(), y.row(j).transpose());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      kxy += kernel_eval(spec, x.row(i).transpose(), y.row(j).transpose());
  return kxx / (static_cast<double>(n) * n) + kyy / (static_cast<double>(m) * m) -
         2.0 * kxy / (static_cast<double>(n) * m);
}

/// Anderson-Darling A^2 against N(mu, sigma^2); the probability transforms
/// are clamped to [1e-12, 1 - 1e-12] before the logs.
inline double anderson_darling_statistic(std::vector<double> xs, double mu,
                                         double sigma) {
  if (xs.empty())
    throw std::invalid_argument("anderson_darling: empty sample");
  if (!(sigma > 0.0))
    throw std::invalid_argument("anderson_darling: sigma must be positive");
  std::sort(xs.begin(), xs.end());
  const auto n = xs.size();
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = std::clamp(normal_cdf((xs[i] - mu) / sigma), 1e-12, 1.0 - 1e-12);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += (2.0 * (i + 1) - 1.0) * (std::log(u[i]) + std::log(1.0 - u[n - 1 - i]));
  return -static_cast<double>(n) - acc / static_cast<double>(n);
}

/// Lilliefors statistic: KS distance against the normal fitted by the sample
/// mean and the unbiased (divisor n-1) variance.
inline double lilliefors_statistic(const std::vector<double>& xs) {
  const auto n = xs.size();
  if (n < 2) throw std::invalid_argument("lilliefors: need at least two points");
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(n - 1);
  if (!(var > 0.0)) throw std::invalid_argument("lilliefors: zero variance");
  const double sd = std::sqrt(var);
  return ks_statistic(xs, [&](double x) { return normal_cdf((x - mean) / sd); });
}

}  // namespace steingof
