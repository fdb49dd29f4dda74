#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "steingof/common.hpp"
#include "steingof/detail/mcmc.hpp"

namespace steingof {

/// Coordinatewise box constraints on the parameter vector. Unbounded sides
/// use +/- infinity.
struct ParameterBox {
  VectorXd lower;
  VectorXd upper;
};

inline VectorXd clamp_to_box(const ParameterBox& box, VectorXd theta) {
  for (Eigen::Index i = 0; i < theta.size(); ++i)
    theta[i] = std::min(box.upper[i], std::max(box.lower[i], theta[i]));
  return theta;
}

/// score(theta, x) = jacobian(x) * theta + offset(x) for families affine in
/// theta. divergence_grad is the theta-gradient of div_x score(theta, x),
/// which is constant in theta for such families.
struct AffineScoreDecomposition {
  MatrixXd jacobian;         // d x k
  VectorXd offset;           // d
  VectorXd divergence_grad;  // k
};

/// A parametric family exposed through its score function
/// s_theta(x) = grad_x log p_theta(x). Normalizing constants never enter:
/// unnormalized log-densities are exposed only where a sampler needs them.
/// Families are immutable after construction and all evaluations are pure.
class ModelFamily {
 public:
  virtual ~ModelFamily() = default;

  virtual std::string name() const = 0;
  virtual int param_dim() const = 0;
  virtual int data_dim() const = 0;
  virtual ParameterBox domain() const = 0;
  virtual VectorXd score(const VectorXd& theta, const VectorXd& x) const = 0;

  /// Scores for every row of a batch, one row per observation.
  virtual MatrixXd score_batch(const VectorXd& theta, const SampleBatch& x) const {
    MatrixXd s(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      s.row(i) = score(theta, x.row(i).transpose()).transpose();
    return s;
  }

  /// d/dtheta of the score, a d x k matrix.
  virtual bool has_param_score_jacobian() const { return false; }
  virtual MatrixXd param_score_jacobian(const VectorXd&, const VectorXd&) const {
    throw std::logic_error(name() + ": parameter score jacobian not available");
  }

  /// theta-gradient of div_x score(theta, x), i.e. the x-divergence of each
  /// column of the parameter score jacobian. Needed by the orthogonalized
  /// kernel and the score-matching estimator.
  virtual bool has_score_divergence_grad() const { return false; }
  virtual VectorXd score_divergence_grad(const VectorXd&, const VectorXd&) const {
    throw std::logic_error(name() + ": score divergence gradient not available");
  }

  virtual bool has_unnorm_logdensity() const { return false; }
  virtual double unnorm_logdensity(const VectorXd&, const VectorXd&) const {
    throw std::logic_error(name() + ": unnormalized log-density not available");
  }

  /// Normalized log-density; only tractable-likelihood families provide it.
  virtual bool has_normalized_logdensity() const { return false; }
  virtual double normalized_logdensity(const VectorXd&, const VectorXd&) const {
    throw std::logic_error(name() + ": normalized log-density not available");
  }

  /// Model CDF (univariate families only); used by the distribution-function
  /// baselines.
  virtual bool has_cdf() const { return false; }
  virtual double cdf(const VectorXd&, double) const {
    throw std::logic_error(name() + ": cdf not available");
  }

  virtual bool is_affine() const { return false; }
  virtual AffineScoreDecomposition affine_decomposition(const VectorXd&) const {
    throw std::invalid_argument(name() + ": family is not affine in theta");
  }

  virtual bool has_sampler() const { return false; }
  virtual SampleBatch sample(const VectorXd&, int, std::uint64_t) const {
    throw std::logic_error(name() + ": sampler not available");
  }

 protected:
  void check_theta(const VectorXd& theta) const {
    if (theta.size() != param_dim())
      throw std::invalid_argument(name() + ": wrong parameter dimension");
    if (!theta.allFinite())
      throw std::invalid_argument(name() + ": non-finite parameter");
  }
  void check_x(const VectorXd& x) const {
    if (x.size() != data_dim())
      throw std::invalid_argument(name() + ": wrong data dimension");
    if (!x.allFinite())
      throw std::invalid_argument(name() + ": non-finite data point");
  }
};

/// Affine decomposition with the precondition check, as a free operation.
inline AffineScoreDecomposition affine_score_decomposition(
    const ModelFamily& family, const VectorXd& x) {
  if (!family.is_affine())
    throw std::invalid_argument(family.name() + ": family is not affine in theta");
  return family.affine_decomposition(x);
}

// ---------------------------------------------------------------------------
// Scalar score formulas, usable standalone.
// ---------------------------------------------------------------------------

/// Score of N(mu, sigma^2) at x: -(x - mu) / sigma^2.
inline double gaussian_score(double mu, double sigma, double x) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_score: sigma <= 0");
  return -(x - mu) / (sigma * sigma);
}

namespace detail {

/// Basis phi_l(x) = x^l / sqrt(l!) * exp(-x^2 / (2 s2)) with its first two
/// derivatives, l = 1..p.
struct KefBasis {
  double s2;                        // kappa bandwidth squared
  std::vector<double> inv_sqrt_fact;  // 1/sqrt(l!), index l-1

  KefBasis(int p, double kappa_bandwidth) : s2(kappa_bandwidth * kappa_bandwidth) {
    inv_sqrt_fact.resize(p);
    double fact = 1.0;
    for (int l = 1; l <= p; ++l) {
      fact *= l;
      inv_sqrt_fact[l - 1] = 1.0 / std::sqrt(fact);
    }
  }

  double value(int l, double x) const {
    return std::pow(x, l) * inv_sqrt_fact[l - 1] * std::exp(-x * x / (2.0 * s2));
  }
  double deriv(int l, double x) const {
    const double env = std::exp(-x * x / (2.0 * s2));
    return (l * std::pow(x, l - 1) - std::pow(x, l + 1) / s2) *
           inv_sqrt_fact[l - 1] * env;
  }
  double second_deriv(int l, double x) const {
    const double env = std::exp(-x * x / (2.0 * s2));
    const double lead = l >= 2 ? l * (l - 1) * std::pow(x, l - 2) : 0.0;
    return (lead - (2.0 * l + 1) * std::pow(x, l) / s2 +
            std::pow(x, l + 2) / (s2 * s2)) *
           inv_sqrt_fact[l - 1] * env;
  }
};

}  // namespace detail

/// Score of the finite-rank kernel exponential family tilt of N(0, ref_var):
/// -x/ref_var + sum_l theta_l phi_l'(x).
inline double kef_score(const VectorXd& theta, double x, double kappa_bandwidth,
                        double ref_var) {
  if (theta.size() < 1) throw std::invalid_argument("kef_score: empty theta");
  if (!theta.allFinite()) throw std::invalid_argument("kef_score: non-finite theta");
  if (!(kappa_bandwidth > 0.0) || !(ref_var > 0.0))
    throw std::invalid_argument("kef_score: bandwidth and ref_var must be positive");
  detail::KefBasis basis(static_cast<int>(theta.size()), kappa_bandwidth);
  double s = -x / ref_var;
  for (int l = 1; l <= theta.size(); ++l) s += theta[l - 1] * basis.deriv(l, x);
  return s;
}

/// Score of the quadratic-interaction conditional Gaussian model, component i:
/// sum_{j != i} 4 Sigma_ij x_i x_j^2 + 2 g2_i x_i + g1_i.
inline VectorXd cond_gauss_score(const MatrixXd& sigma, const VectorXd& gamma1,
                                 const VectorXd& gamma2, const VectorXd& x) {
  const auto d = x.size();
  if (sigma.rows() != d || sigma.cols() != d || gamma1.size() != d ||
      gamma2.size() != d)
    throw std::invalid_argument("cond_gauss_score: inconsistent dimensions");
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(gamma2[i] < 0.0))
      throw std::invalid_argument("cond_gauss_score: gamma2 must be negative");
    if (sigma(i, i) != 0.0)
      throw std::invalid_argument("cond_gauss_score: Sigma diagonal must be zero");
    for (Eigen::Index j = 0; j < d; ++j) {
      if (sigma(i, j) != sigma(j, i))
        throw std::invalid_argument("cond_gauss_score: Sigma must be symmetric");
      if (i != j && sigma(i, j) > 0.0)
        throw std::invalid_argument(
            "cond_gauss_score: off-diagonal Sigma entries must be <= 0");
    }
  }
  VectorXd s(d);
  const VectorXd x2 = x.cwiseProduct(x);
  for (Eigen::Index i = 0; i < d; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
      if (j != i) acc += sigma(i, j) * x2[j];
    s[i] = 4.0 * acc * x[i] + 2.0 * gamma2[i] * x[i] + gamma1[i];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Families
// ---------------------------------------------------------------------------

/// N(mu, sigma^2) with theta = (mu, sigma).
class GaussianFamily final : public ModelFamily {
 public:
  static constexpr double kSigmaFloor = 1e-8;

  std::string name() const override { return "gaussian"; }
  int param_dim() const override { return 2; }
  int data_dim() const override { return 1; }

  ParameterBox domain() const override {
    ParameterBox box;
    box.lower = VectorXd(2);
    box.upper = VectorXd(2);
    box.lower << -1e8, kSigmaFloor;
    box.upper << 1e8, 1e8;
    return box;
  }

  VectorXd score(const VectorXd& theta, const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    VectorXd s(1);
    s[0] = gaussian_score(theta[0], theta[1], x[0]);
    return s;
  }

  MatrixXd score_batch(const VectorXd& theta, const SampleBatch& x) const override {
    check_theta(theta);
    if (!(theta[1] > 0.0)) throw std::invalid_argument("gaussian: sigma <= 0");
    return -(x.array() - theta[0]) / (theta[1] * theta[1]);
  }

  bool has_param_score_jacobian() const override { return true; }
  MatrixXd param_score_jacobian(const VectorXd& theta,
                                const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    const double sigma = theta[1];
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian: sigma <= 0");
    MatrixXd r(1, 2);
    r(0, 0) = 1.0 / (sigma * sigma);
    r(0, 1) = 2.0 * (x[0] - theta[0]) / (sigma * sigma * sigma);
    return r;
  }

  bool has_score_divergence_grad() const override { return true; }
  VectorXd score_divergence_grad(const VectorXd& theta,
                                 const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    const double sigma = theta[1];
    VectorXd g(2);
    g << 0.0, 2.0 / (sigma * sigma * sigma);
    return g;
  }

  bool has_unnorm_logdensity() const override { return true; }
  double unnorm_logdensity(const VectorXd& theta, const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    const double z = x[0] - theta[0];
    return -z * z / (2.0 * theta[1] * theta[1]);
  }

  bool has_normalized_logdensity() const override { return true; }
  double normalized_logdensity(const VectorXd& theta,
                               const VectorXd& x) const override {
    static const double kLogTwoPi = std::log(2.0 * M_PI);
    return unnorm_logdensity(theta, x) - 0.5 * kLogTwoPi - std::log(theta[1]);
  }

  bool has_cdf() const override { return true; }
  double cdf(const VectorXd& theta, double x) const override {
    check_theta(theta);
    return 0.5 * std::erfc(-(x - theta[0]) / (theta[1] * M_SQRT2));
  }

  bool has_sampler() const override { return true; }
  SampleBatch sample(const VectorXd& theta, int n, std::uint64_t seed) const override {
    check_theta(theta);
    if (!(theta[1] > 0.0)) throw std::invalid_argument("gaussian: sigma <= 0");
    Rng rng(seed);
    SampleBatch out(n, 1);
    for (int i = 0; i < n; ++i) out(i, 0) = rng.normal(theta[0], theta[1]);
    return out;
  }
};

/// N(theta, 1): the one-parameter location family. Affine in theta with
/// score theta - x.
class GaussianLocationFamily final : public ModelFamily {
 public:
  std::string name() const override { return "gaussian_location"; }
  int param_dim() const override { return 1; }
  int data_dim() const override { return 1; }

  ParameterBox domain() const override {
    ParameterBox box;
    box.lower = VectorXd::Constant(1, -1e8);
    box.upper = VectorXd::Constant(1, 1e8);
    return box;
  }

  VectorXd score(const VectorXd& theta, const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    VectorXd s(1);
    s[0] = theta[0] - x[0];
    return s;
  }

  MatrixXd score_batch(const VectorXd& theta, const SampleBatch& x) const override {
    check_theta(theta);
    return theta[0] - x.array();
  }

  bool has_param_score_jacobian() const override { return true; }
  MatrixXd param_score_jacobian(const VectorXd& theta,
                                const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    return MatrixXd::Ones(1, 1);
  }

  bool has_score_divergence_grad() const override { return true; }
  VectorXd score_divergence_grad(const VectorXd& theta,
                                 const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    return VectorXd::Zero(1);
  }

  bool is_affine() const override { return true; }
  AffineScoreDecomposition affine_decomposition(const VectorXd& x) const override {
    check_x(x);
    AffineScoreDecomposition dec;
    dec.jacobian = MatrixXd::Ones(1, 1);
    dec.offset = -x;
    dec.divergence_grad = VectorXd::Zero(1);
    return dec;
  }

  bool has_unnorm_logdensity() const override { return true; }
  double unnorm_logdensity(const VectorXd& theta, const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    const double z = x[0] - theta[0];
    return -0.5 * z * z;
  }

  bool has_normalized_logdensity() const override { return true; }
  double normalized_logdensity(const VectorXd& theta,
                               const VectorXd& x) const override {
    return unnorm_logdensity(theta, x) - 0.5 * std::log(2.0 * M_PI);
  }

  bool has_cdf() const override { return true; }
  double cdf(const VectorXd& theta, double x) const override {
    check_theta(theta);
    return 0.5 * std::erfc(-(x - theta[0]) / M_SQRT2);
  }

  bool has_sampler() const override { return true; }
  SampleBatch sample(const VectorXd& theta, int n, std::uint64_t seed) const override {
    check_theta(theta);
    Rng rng(seed);
    SampleBatch out(n, 1);
    for (int i = 0; i < n; ++i) out(i, 0) = rng.normal(theta[0], 1.0);
    return out;
  }
};

/// Finite-rank kernel exponential family on R: the reference N(0, ref_var)
/// tilted by exp(sum_l theta_l phi_l(x)) with Gaussian-kernel basis
/// phi_l(x) = x^l / sqrt(l!) exp(-x^2 / (2 kb^2)). The normalizer is
/// intractable; sampling goes through MALA.
class KefFamily final : public ModelFamily {
 public:
  explicit KefFamily(int rank, double kappa_bandwidth = 1.0, double ref_var = 9.0,
                     ChainConfig chain = ChainConfig{})
      : rank_(rank),
        kappa_bandwidth_(kappa_bandwidth),
        ref_var_(ref_var),
        chain_(chain),
        basis_(rank, kappa_bandwidth) {
    if (rank < 1) throw std::invalid_argument("kef: rank must be >= 1");
    if (!(kappa_bandwidth > 0.0) || !(ref_var > 0.0))
      throw std::invalid_argument("kef: bandwidth and ref_var must be positive");
  }

  std::string name() const override { return "kef"; }
  int param_dim() const override { return rank_; }
  int data_dim() const override { return 1; }
  double kappa_bandwidth() const { return kappa_bandwidth_; }
  double ref_var() const { return ref_var_; }
  const ChainConfig& chain_config() const { return chain_; }

  ParameterBox domain() const override {
    ParameterBox box;
    box.lower = VectorXd::Constant(rank_, -50.0);
    box.upper = VectorXd::Constant(rank_, 50.0);
    return box;
  }

  VectorXd score(const VectorXd& theta, const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    VectorXd s(1);
    double v = -x[0] / ref_var_;
    for (int l = 1; l <= rank_; ++l) v += theta[l - 1] * basis_.deriv(l, x[0]);
    s[0] = v;
    return s;
  }

  bool has_param_score_jacobian() const override { return true; }
  MatrixXd param_score_jacobian(const VectorXd& theta,
                                const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    MatrixXd r(1, rank_);
    for (int l = 1; l <= rank_; ++l) r(0, l - 1) = basis_.deriv(l, x[0]);
    return r;
  }

  bool has_score_divergence_grad() const override { return true; }
  VectorXd score_divergence_grad(const VectorXd& theta,
                                 const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    VectorXd g(rank_);
    for (int l = 1; l <= rank_; ++l) g[l - 1] = basis_.second_deriv(l, x[0]);
    return g;
  }

  bool is_affine() const override { return true; }
  AffineScoreDecomposition affine_decomposition(const VectorXd& x) const override {
    check_x(x);
    AffineScoreDecomposition dec;
    dec.jacobian = MatrixXd(1, rank_);
    dec.divergence_grad = VectorXd(rank_);
    for (int l = 1; l <= rank_; ++l) {
      dec.jacobian(0, l - 1) = basis_.deriv(l, x[0]);
      dec.divergence_grad[l - 1] = basis_.second_deriv(l, x[0]);
    }
    dec.offset = VectorXd::Constant(1, -x[0] / ref_var_);
    return dec;
  }

  bool has_unnorm_logdensity() const override { return true; }
  double unnorm_logdensity(const VectorXd& theta, const VectorXd& x) const override {
    check_theta(theta);
    check_x(x);
    double v = -x[0] * x[0] / (2.0 * ref_var_);
    for (int l = 1; l <= rank_; ++l) v += theta[l - 1] * basis_.value(l, x[0]);
    return v;
  }

  bool has_sampler() const override { return true; }
  SampleBatch sample(const VectorXd& theta, int n, std::uint64_t seed) const override {
    check_theta(theta);
    ChainConfig cfg = chain_;
    cfg.seed = seed;
    auto score_fn = [&](const VectorXd& x) { return score(theta, x); };
    auto logpdf_fn = [&](const VectorXd& x) { return unnorm_logdensity(theta, x); };
    return detail::mala_run(score_fn, logpdf_fn, 1, cfg, n, seed).samples;
  }

 private:
  int rank_;
  double kappa_bandwidth_;
  double ref_var_;
  ChainConfig chain_;
  detail::KefBasis basis_;
};

/// Quadratic-interaction model with Gaussian full conditionals. gamma1 and
/// gamma2 are fixed, known parameters; theta holds the interaction strengths
/// Sigma_ij on a configurable set of strict-upper-triangle edges (only the
/// free edges are estimated, the rest of Sigma is zero). Sampling goes
/// through a systematic-scan Gibbs sweep.
class ConditionalGaussianFamily final : public ModelFamily {
 public:
  using Edge = std::pair<int, int>;

  ConditionalGaussianFamily(int dim, std::vector<Edge> edges, VectorXd gamma1,
                            VectorXd gamma2, ChainConfig chain = ChainConfig{})
      : dim_(dim),
        edges_(std::move(edges)),
        gamma1_(std::move(gamma1)),
        gamma2_(std::move(gamma2)),
        chain_(chain) {
    if (dim_ < 2) throw std::invalid_argument("cond_gauss: dimension must be >= 2");
    if (gamma1_.size() != dim_ || gamma2_.size() != dim_)
      throw std::invalid_argument("cond_gauss: gamma dimension mismatch");
    for (Eigen::Index i = 0; i < dim_; ++i)
      if (!(gamma2_[i] < 0.0))
        throw std::invalid_argument("cond_gauss: gamma2 entries must be negative");
    std::set<Edge> seen;
    for (const auto& [a, b] : edges_) {
      if (a < 0 || b < 0 || a >= dim_ || b >= dim_ || a >= b)
        throw std::invalid_argument("cond_gauss: edges must satisfy 0 <= a < b < d");
      if (!seen.insert({a, b}).second)
        throw std::invalid_argument("cond_gauss: duplicate edge");
    }
  }

  /// Cycle edges {i, i+1} plus the wrap-around {0, d-1}.
  static std::vector<Edge> ring_edges(int d) {
    std::vector<Edge> e;
    for (int i = 0; i + 1 < d; ++i) e.push_back({i, i + 1});
    if (d > 2) e.push_back({0, d - 1});
    return e;
  }

  /// Second-neighbor edges {i, i+2 mod d}, deduplicated.
  static std::vector<Edge> second_neighbor_edges(int d) {
    std::set<Edge> e;
    for (int i = 0; i < d; ++i) {
      const int j = (i + 2) % d;
      if (i != j) e.insert({std::min(i, j), std::max(i, j)});
    }
    return {e.begin(), e.end()};
  }

  static std::vector<Edge> full_edges(int d) {
    std::vector<Edge> e;
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) e.push_back({a, b});
    return e;
  }

  std::string name() const override { return "cond_gauss"; }
  int param_dim() const override { return static_cast<int>(edges_.size()); }
  int data_dim() const override { return dim_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const VectorXd& gamma1() const { return gamma1_; }
  const VectorXd& gamma2() const { return gamma2_; }
  const ChainConfig& chain_config() const { return chain_; }

  ParameterBox domain() const override {
    ParameterBox box;
    box.lower = VectorXd::Constant(param_dim(), -1e3);
    box.upper = VectorXd::Constant(param_dim(), 0.0);
    return box;
  }

  MatrixXd sigma_from_theta(const VectorXd& theta) const {
    check_theta(theta);
    MatrixXd sigma = MatrixXd::Zero(dim_, dim_);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      if (theta[e] > 0.0)
        throw std::invalid_argument(
            "cond_gauss: positive off-diagonal interaction");
      sigma(edges_[e].first, edges_[e].second) = theta[e];
      sigma(edges_[e].second, edges_[e].first) = theta[e];
    }
    return sigma;
  }

  VectorXd score(const VectorXd& theta, const VectorXd& x) const override {
    check_x(x);
    return cond_gauss_score(sigma_from_theta(theta), gamma1_, gamma2_, x);
  }

  MatrixXd score_batch(const VectorXd& theta, const SampleBatch& x) const override {
    if (x.cols() != dim_)
      throw std::invalid_argument("cond_gauss: wrong data dimension");
    const MatrixXd sigma = sigma_from_theta(theta);
    const MatrixXd x2 = x.cwiseProduct(x);
    // row i of x2 * sigma holds sum_{j != i} Sigma_ij x_j^2 per coordinate
    MatrixXd s = 4.0 * (x2 * sigma).cwiseProduct(x);
    s += 2.0 * x * gamma2_.asDiagonal();
    s.rowwise() += gamma1_.transpose();
    return s;
  }

  bool has_param_score_jacobian() const override { return true; }
  MatrixXd param_score_jacobian(const VectorXd& theta,
                                const VectorXd& x) const override {
    check_theta(theta);
    return affine_decomposition(x).jacobian;
  }

  bool has_score_divergence_grad() const override { return true; }
  VectorXd score_divergence_grad(const VectorXd& theta,
                                 const VectorXd& x) const override {
    check_theta(theta);
    return affine_decomposition(x).divergence_grad;
  }

  bool is_affine() const override { return true; }
  AffineScoreDecomposition affine_decomposition(const VectorXd& x) const override {
    check_x(x);
    const int k = param_dim();
    AffineScoreDecomposition dec;
    dec.jacobian = MatrixXd::Zero(dim_, k);
    dec.divergence_grad = VectorXd(k);
    for (int e = 0; e < k; ++e) {
      const auto [a, b] = edges_[e];
      dec.jacobian(a, e) = 4.0 * x[a] * x[b] * x[b];
      dec.jacobian(b, e) = 4.0 * x[b] * x[a] * x[a];
      dec.divergence_grad[e] = 4.0 * (x[a] * x[a] + x[b] * x[b]);
    }
    dec.offset = 2.0 * gamma2_.cwiseProduct(x) + gamma1_;
    return dec;
  }

  bool has_unnorm_logdensity() const override { return true; }
  double unnorm_logdensity(const VectorXd& theta, const VectorXd& x) const override {
    check_x(x);
    const MatrixXd sigma = sigma_from_theta(theta);
    const VectorXd x2 = x.cwiseProduct(x);
    // sum over ordered pairs i != j equals twice the upper-triangle sum
    double v = x2.dot(sigma * x2);  // Sigma diagonal is zero
    v += gamma2_.dot(x2) + gamma1_.dot(x);
    return v;
  }

  bool has_sampler() const override { return true; }
  SampleBatch sample(const VectorXd& theta, int n, std::uint64_t seed) const override {
    ChainConfig cfg = chain_;
    cfg.seed = seed;
    return detail::gibbs_run(sigma_from_theta(theta), gamma1_, gamma2_, cfg, n,
                             seed);
  }

 private:
  int dim_;
  std::vector<Edge> edges_;
  VectorXd gamma1_;
  VectorXd gamma2_;
  ChainConfig chain_;
};

}  // namespace steingof
