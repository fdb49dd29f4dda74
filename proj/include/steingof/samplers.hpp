#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "steingof/common.hpp"
#include "steingof/detail/mcmc.hpp"
#include "steingof/models.hpp"

namespace steingof {

struct McmcStats {
  double acceptance_rate = 1.0;
  double step_size = 0.0;
};

/// MALA draws from a family exposing score and unnormalized log-density.
/// Deterministic given cfg.seed; repeated calls agree bitwise.
inline SampleBatch mala_sample(const ModelFamily& family, const VectorXd& theta,
                               const ChainConfig& cfg, int n,
                               McmcStats* stats = nullptr) {
  if (!family.has_unnorm_logdensity())
    throw std::invalid_argument(
        "mala_sample: family lacks an unnormalized log-density");
  auto score_fn = [&](const VectorXd& x) { return family.score(theta, x); };
  auto logpdf_fn = [&](const VectorXd& x) {
    return family.unnorm_logdensity(theta, x);
  };
  detail::McmcResult res = detail::mala_run(score_fn, logpdf_fn,
                                            family.data_dim(), cfg, n, cfg.seed);
  if (stats) *stats = McmcStats{res.acceptance_rate, res.step_size};
  return std::move(res.samples);
}

/// Systematic-scan Gibbs draws from the quadratic-interaction conditional
/// Gaussian model. Deterministic given cfg.seed.
inline SampleBatch gibbs_conditional_gaussian(const MatrixXd& sigma,
                                              const VectorXd& gamma1,
                                              const VectorXd& gamma2,
                                              const ChainConfig& cfg, int n) {
  return detail::gibbs_run(sigma, gamma1, gamma2, cfg, n, cfg.seed);
}

// ---------------------------------------------------------------------------
// Data-generating processes used by the experiments.
// ---------------------------------------------------------------------------

enum class DgpKind {
  gaussian_shift,     ///< N(mu, 1)
  student_t_shifted,  ///< t(nu) + 10/(nu + 1)
  gaussian_mixture,   ///< w N(0,1) + (1-w) N(delta, (1+delta)^2)
  generalized_chi2,   ///< density ~ x^(alpha-1) exp(-(x-shift)^2/2) on x > 0
  mult_local_alt,     ///< ~ p0(x) (1 + gamma h0(x) / sqrt(n)), |h0| <= 1
  add_local_alt,      ///< (1 - gamma/sqrt(n)) p0 + (gamma/sqrt(n)) N(g_mean, g_sd^2)
  model_family        ///< draws from a ModelFamily at a fixed theta
};

struct DgpSpec {
  DgpKind kind = DgpKind::gaussian_shift;
  int n = 0;

  double mu = 0.0;           // gaussian_shift
  double nu = 3.0;           // student_t_shifted
  double w = 0.5;            // gaussian_mixture
  double delta = 0.0;        // gaussian_mixture
  double alpha_power = 1.0;  // generalized_chi2
  double shift = 0.0;        // generalized_chi2

  // local alternatives around the base Gaussian N(base_mu, base_sigma^2)
  double gamma = 0.0;
  std::string tilt = "tanh";  // mult_local_alt: one of sin, cos, tanh
  double base_mu = 0.0;
  double base_sigma = 1.0;
  double g_mean = 2.0;                // add_local_alt contaminant mean
  double g_sd = 1.7320508075688772;   // add_local_alt contaminant sd, sqrt(3)

  std::shared_ptr<const ModelFamily> family;  // model_family
  VectorXd theta;                             // model_family
};

namespace detail {

inline double bounded_tilt(const std::string& name, double x) {
  if (name == "tanh") return std::tanh(x);
  if (name == "sin") return std::sin(x);
  if (name == "cos") return std::cos(x);
  throw std::invalid_argument("mult_local_alt: unknown tilt '" + name + "'");
}

/// Sampler for the density proportional to x^(alpha-1) exp(-(x-shift)^2/2)
/// on (0, shift + 12]. The CDF is tabulated on a graded grid (denser near the
/// origin, where x^(alpha-1) may be singular); each cell integrates the power
/// factor exactly against the midpoint Gaussian factor, so inversion stays
/// monotone for every alpha > 0.
class GeneralizedChi2Sampler {
 public:
  GeneralizedChi2Sampler(double alpha, double shift)
      : alpha_(alpha), shift_(shift) {
    if (!(alpha > 0.0) || alpha > 50.0)
      throw std::invalid_argument(
          "generalized_chi2: alpha must lie in (0, 50]");
    if (shift < 0.0)
      throw std::invalid_argument("generalized_chi2: shift must be >= 0");
    const double hi = shift + 12.0;
    grid_.resize(kNodes + 1);
    for (int j = 0; j <= kNodes; ++j)
      grid_[j] = hi * std::pow(static_cast<double>(j) / kNodes, 1.5);
    cdf_.assign(kNodes + 1, 0.0);
    gmid_.assign(kNodes, 0.0);
    for (int j = 0; j < kNodes; ++j) {
      const double a = grid_[j], b = grid_[j + 1];
      const double m = 0.5 * (a + b) - shift;
      gmid_[j] = std::exp(-0.5 * m * m);
      const double mass =
          gmid_[j] * (std::pow(b, alpha) - std::pow(a, alpha)) / alpha;
      cdf_[j + 1] = cdf_[j] + mass;
    }
    total_ = cdf_[kNodes];
    if (!(total_ > 0.0))
      throw std::invalid_argument("generalized_chi2: degenerate density");
  }

  double draw(Rng& rng) const {
    double u01 = rng.uniform();
    while (u01 == 0.0) u01 = rng.uniform();  // keep the support strictly positive
    const double u = u01 * total_;
    int lo = 0, hi = kNodes;
    while (hi - lo > 1) {
      const int mid = (lo + hi) / 2;
      (cdf_[mid] <= u ? lo : hi) = mid;
    }
    const double rem = (u - cdf_[lo]) * alpha_ / gmid_[lo];
    const double xa = std::pow(grid_[lo], alpha_) + rem;
    return std::pow(xa, 1.0 / alpha_);
  }

 private:
  static constexpr int kNodes = 8192;
  double alpha_, shift_, total_;
  std::vector<double> grid_, cdf_, gmid_;
};

}  // namespace detail

/// Draws spec.n iid observations; a pure function of (spec, seed).
inline SampleBatch dgp_sample(const DgpSpec& spec, std::uint64_t seed) {
  if (spec.n < 1) throw std::invalid_argument("dgp_sample: n must be >= 1");
  Rng rng(seed);
  switch (spec.kind) {
    case DgpKind::gaussian_shift: {
      SampleBatch out(spec.n, 1);
      for (int i = 0; i < spec.n; ++i) out(i, 0) = rng.normal(spec.mu, 1.0);
      return out;
    }
    case DgpKind::student_t_shifted: {
      if (!(spec.nu > 0.0))
        throw std::invalid_argument("student_t_shifted: nu must be positive");
      const double shift = 10.0 / (spec.nu + 1.0);
      SampleBatch out(spec.n, 1);
      for (int i = 0; i < spec.n; ++i)
        out(i, 0) = rng.student_t(spec.nu) + shift;
      return out;
    }
    case DgpKind::gaussian_mixture: {
      if (!(spec.w >= 0.0 && spec.w <= 1.0))
        throw std::invalid_argument("gaussian_mixture: w must lie in [0, 1]");
      SampleBatch out(spec.n, 1);
      if (spec.w == 1.0) {
        // degenerate mixture: same stream as the pure-Gaussian branch
        for (int i = 0; i < spec.n; ++i) out(i, 0) = rng.normal(0.0, 1.0);
        return out;
      }
      const double alt_sd = 1.0 + spec.delta;
      for (int i = 0; i < spec.n; ++i) {
        out(i, 0) = rng.bernoulli(spec.w) ? rng.normal(0.0, 1.0)
                                          : rng.normal(spec.delta, alt_sd);
      }
      return out;
    }
    case DgpKind::generalized_chi2: {
      detail::GeneralizedChi2Sampler sampler(spec.alpha_power, spec.shift);
      SampleBatch out(spec.n, 1);
      for (int i = 0; i < spec.n; ++i) out(i, 0) = sampler.draw(rng);
      return out;
    }
    case DgpKind::mult_local_alt: {
      if (!(spec.gamma >= 0.0))
        throw std::invalid_argument("mult_local_alt: gamma must be >= 0");
      if (!(spec.base_sigma > 0.0))
        throw std::invalid_argument("mult_local_alt: base_sigma must be > 0");
      const double root_n = std::sqrt(static_cast<double>(spec.n));
      if (!(spec.gamma < root_n))
        throw std::invalid_argument(
            "mult_local_alt: gamma must satisfy gamma < sqrt(n)");
      // rejection against the base density with envelope 1 + gamma/sqrt(n)
      const double envelope = 1.0 + spec.gamma / root_n;
      SampleBatch out(spec.n, 1);
      for (int i = 0; i < spec.n; ++i) {
        while (true) {
          const double x = rng.normal(spec.base_mu, spec.base_sigma);
          const double density_ratio =
              1.0 + spec.gamma * detail::bounded_tilt(spec.tilt, x) / root_n;
          if (rng.uniform() * envelope < density_ratio) {
            out(i, 0) = x;
            break;
          }
        }
      }
      return out;
    }
    case DgpKind::add_local_alt: {
      if (!(spec.gamma >= 0.0))
        throw std::invalid_argument("add_local_alt: gamma must be >= 0");
      if (!(spec.base_sigma > 0.0) || !(spec.g_sd > 0.0))
        throw std::invalid_argument("add_local_alt: scales must be positive");
      const double mix = spec.gamma / std::sqrt(static_cast<double>(spec.n));
      if (mix > 1.0)
        throw std::invalid_argument(
            "add_local_alt: gamma/sqrt(n) must not exceed 1");
      SampleBatch out(spec.n, 1);
      for (int i = 0; i < spec.n; ++i) {
        out(i, 0) = rng.bernoulli(mix) ? rng.normal(spec.g_mean, spec.g_sd)
                                       : rng.normal(spec.base_mu, spec.base_sigma);
      }
      return out;
    }
    case DgpKind::model_family: {
      if (!spec.family)
        throw std::invalid_argument("model_family: no family configured");
      return spec.family->sample(spec.theta, spec.n, seed);
    }
  }
  throw std::logic_error("unknown DGP kind");
}

}  // namespace steingof
