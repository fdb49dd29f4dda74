#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "steingof/common.hpp"

namespace steingof::detail {

struct McmcResult {
  SampleBatch samples;
  double acceptance_rate = 1.0;
  double step_size = 0.0;
};

/// Metropolis-adjusted Langevin chain. Proposal
///   x' = x + (eps^2/2) s(x) + eps Z,  Z ~ N(0, I_d),
/// accepted with the Metropolis-Hastings ratio on the unnormalized density.
/// The chain starts at the origin. When cfg.step_size == 0, a 200-step
/// Robbins-Monro pilot targets acceptance 0.574 and the step is then frozen,
/// so the collected portion of the chain satisfies detailed balance.
inline McmcResult mala_run(const std::function<VectorXd(const VectorXd&)>& score,
                           const std::function<double(const VectorXd&)>& logpdf,
                           int dim, const ChainConfig& cfg, int n,
                           std::uint64_t seed) {
  if (n < 0) throw std::invalid_argument("mala: sample count must be >= 0");
  if (cfg.burn_in < 0 || cfg.thin < 1)
    throw std::invalid_argument("mala: burn_in >= 0 and thin >= 1 required");

  Rng rng(seed);
  VectorXd x = VectorXd::Zero(dim);
  VectorXd sx = score(x);
  double lx = logpdf(x);
  if (!std::isfinite(lx) || !sx.allFinite())
    throw std::invalid_argument("mala: log-density not finite at initialization");

  double eps = cfg.step_size;
  const double target = 0.574;

  auto step = [&](double step_eps) -> bool {
    const double half = 0.5 * step_eps * step_eps;
    const VectorXd z = rng.normal_vector(dim);
    const VectorXd y = x + half * sx + step_eps * z;
    const double ly = logpdf(y);
    if (!std::isfinite(ly)) return false;
    const VectorXd sy = score(y);
    if (!sy.allFinite()) return false;
    const double fwd = (y - x - half * sx).squaredNorm();
    const double bwd = (x - y - half * sy).squaredNorm();
    const double log_alpha =
        ly - lx + (fwd - bwd) / (2.0 * step_eps * step_eps);
    if (log_alpha >= 0.0 || std::log(rng.uniform()) < log_alpha) {
      x = y;
      sx = sy;
      lx = ly;
      return true;
    }
    return false;
  };

  if (eps <= 0.0) {
    eps = 1.0;
    for (int t = 1; t <= 200; ++t) {
      const bool accepted = step(eps);
      eps = std::exp(std::log(eps) +
                     ((accepted ? 1.0 : 0.0) - target) * 4.0 / (20.0 + t));
    }
  }

  std::int64_t accepted = 0;
  std::int64_t attempted = 0;
  for (std::int64_t t = 0; t < cfg.burn_in; ++t) {
    accepted += step(eps) ? 1 : 0;
    ++attempted;
  }
  SampleBatch out(n, dim);
  for (int k = 0; k < n; ++k) {
    for (std::int64_t t = 0; t < cfg.thin; ++t) {
      accepted += step(eps) ? 1 : 0;
      ++attempted;
    }
    out.row(k) = x.transpose();
  }

  McmcResult res;
  res.samples = std::move(out);
  res.acceptance_rate =
      attempted > 0 ? static_cast<double>(accepted) / attempted : 1.0;
  res.step_size = eps;
  return res;
}

/// Systematic-scan Gibbs sampler for the quadratic-interaction model with
/// Gaussian full conditionals
///   X_i | X_{-i} ~ N(-g1_i / (2 c_i), -1 / (2 c_i)),
///   c_i = sum_{j != i} 2 Sigma_ij x_j^2 + g2_i.
/// Requires Sigma_ij <= 0 off-diagonal and g2_i < 0 so that c_i < 0 always.
/// One "sweep" updates every coordinate once; the chain starts at zero.
inline SampleBatch gibbs_run(const MatrixXd& sigma, const VectorXd& gamma1,
                             const VectorXd& gamma2, const ChainConfig& cfg,
                             int n, std::uint64_t seed) {
  const auto d = sigma.rows();
  if (sigma.cols() != d || gamma1.size() != d || gamma2.size() != d)
    throw std::invalid_argument("gibbs: inconsistent dimensions");
  if (cfg.burn_in < 0 || cfg.thin < 1)
    throw std::invalid_argument("gibbs: burn_in >= 0 and thin >= 1 required");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(gamma2[i] < 0.0))
      throw std::invalid_argument("gibbs: gamma2 entries must be negative");
    if (sigma(i, i) != 0.0)
      throw std::invalid_argument("gibbs: Sigma diagonal must be zero");
    for (Eigen::Index j = 0; j < d; ++j) {
      if (sigma(i, j) != sigma(j, i))
        throw std::invalid_argument("gibbs: Sigma must be symmetric");
      if (i != j && sigma(i, j) > 0.0)
        throw std::invalid_argument(
            "gibbs: off-diagonal Sigma entries must be <= 0");
    }
  }

  // Neighbor lists keep the inner update O(#edges) per coordinate.
  std::vector<std::vector<std::pair<Eigen::Index, double>>> nbr(d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      if (i != j && sigma(i, j) != 0.0) nbr[i].push_back({j, sigma(i, j)});

  Rng rng(seed);
  VectorXd x = VectorXd::Zero(d);
  VectorXd x2 = VectorXd::Zero(d);

  auto sweep = [&]() {
    for (Eigen::Index i = 0; i < d; ++i) {
      double c = gamma2[i];
      for (const auto& [j, sij] : nbr[i]) c += 2.0 * sij * x2[j];
      const double mean = -gamma1[i] / (2.0 * c);
      const double var = -1.0 / (2.0 * c);
      x[i] = mean + std::sqrt(var) * rng.normal();
      x2[i] = x[i] * x[i];
    }
  };

  for (std::int64_t t = 0; t < cfg.burn_in; ++t) sweep();
  SampleBatch out(n, d);
  for (int k = 0; k < n; ++k) {
    for (std::int64_t t = 0; t < cfg.thin; ++t) sweep();
    out.row(k) = x.transpose();
  }
  return out;
}

}  // namespace steingof::detail
