#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "steingof/common.hpp"

namespace steingof {

enum class KernelKind { gaussian, linear };

/// Gaussian kernels may defer bandwidth selection to the data (median
/// heuristic); `resolve_bandwidth` turns such a spec into a fixed one.
enum class BandwidthRule { fixed, median };

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  double bandwidth = 1.0;  // gaussian only, in data units
  BandwidthRule rule = BandwidthRule::fixed;

  static KernelSpec gaussian(double h) {
    if (!(h > 0.0) || !std::isfinite(h))
      throw std::invalid_argument("gaussian kernel bandwidth must be positive");
    return KernelSpec{KernelKind::gaussian, h, BandwidthRule::fixed};
  }
  static KernelSpec gaussian_median() {
    return KernelSpec{KernelKind::gaussian, 0.0, BandwidthRule::median};
  }
  static KernelSpec linear() {
    return KernelSpec{KernelKind::linear, 0.0, BandwidthRule::fixed};
  }

  bool needs_bandwidth() const {
    return kind == KernelKind::gaussian && rule == BandwidthRule::median;
  }
};

namespace detail {

inline void check_kernel_inputs(const KernelSpec& spec, const VectorXd& x,
                                const VectorXd& y) {
  if (x.size() != y.size() || x.size() == 0)
    throw std::invalid_argument("kernel arguments must share dimension d >= 1");
  if (!x.allFinite() || !y.allFinite())
    throw std::invalid_argument("kernel arguments must be finite");
  if (spec.kind == KernelKind::gaussian) {
    if (spec.rule == BandwidthRule::median)
      throw std::invalid_argument("median-heuristic bandwidth not resolved");
    if (!(spec.bandwidth > 0.0))
      throw std::invalid_argument("gaussian kernel bandwidth must be positive");
  }
}

}  // namespace detail

/// K(x, y). Gaussian: exp(-|x-y|^2 / (2 h^2)); linear: x'y.
inline double kernel_eval(const KernelSpec& spec, const VectorXd& x,
                          const VectorXd& y) {
  detail::check_kernel_inputs(spec, x, y);
  switch (spec.kind) {
    case KernelKind::gaussian: {
      const double h2 = spec.bandwidth * spec.bandwidth;
      return std::exp(-(x - y).squaredNorm() / (2.0 * h2));
    }
    case KernelKind::linear:
      return x.dot(y);
  }
  throw std::logic_error("unknown kernel kind");
}

struct KernelGrads {
  VectorXd grad_x;  ///< d/dx K(x, y)
  VectorXd grad_y;  ///< d/dy K(x, y)
  double trace;     ///< Tr(d/dx d/dy K(x, y))
};

inline KernelGrads kernel_grads(const KernelSpec& spec, const VectorXd& x,
                                const VectorXd& y) {
  detail::check_kernel_inputs(spec, x, y);
  const auto d = x.size();
  switch (spec.kind) {
    case KernelKind::gaussian: {
      const double h2 = spec.bandwidth * spec.bandwidth;
      const VectorXd diff = x - y;
      const double r2 = diff.squaredNorm();
      const double k = std::exp(-r2 / (2.0 * h2));
      KernelGrads g;
      g.grad_x = -(diff / h2) * k;
      g.grad_y = (diff / h2) * k;
      g.trace = (static_cast<double>(d) / h2 - r2 / (h2 * h2)) * k;
      return g;
    }
    case KernelKind::linear: {
      KernelGrads g;
      g.grad_x = y;
      g.grad_y = x;
      g.trace = static_cast<double>(d);
      return g;
    }
  }
  throw std::logic_error("unknown kernel kind");
}

/// Median of the raw pairwise Euclidean distances (lower median for even
/// pair counts). The intended workloads stay below n = 1e4, so the exact
/// O(n^2) enumeration is used.
inline double median_heuristic(const SampleBatch& samples) {
  const auto n = samples.rows();
  if (n < 2)
    throw std::invalid_argument("median heuristic needs at least two points");
  if (!samples.allFinite())
    throw std::invalid_argument("median heuristic: samples must be finite");
  std::vector<double> dist;
  dist.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      dist.push_back((samples.row(i) - samples.row(j)).norm());
  const std::size_t mid = (dist.size() - 1) / 2;  // lower median
  std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
  const double med = dist[mid];
  if (!(med > 0.0))
    throw std::invalid_argument(
        "median heuristic: median pairwise distance is zero");
  return med;
}

/// Fixes a median-rule bandwidth from the given data; no-op otherwise.
inline KernelSpec resolve_bandwidth(KernelSpec spec, const SampleBatch& samples) {
  if (spec.needs_bandwidth()) {
    spec.bandwidth = median_heuristic(samples);
    spec.rule = BandwidthRule::fixed;
  }
  return spec;
}

}  // namespace steingof
