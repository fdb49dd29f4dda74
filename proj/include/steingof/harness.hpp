#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "steingof/baselines.hpp"
#include "steingof/bootstrap.hpp"
#include "steingof/estimators.hpp"
#include "steingof/kernels.hpp"
#include "steingof/models.hpp"
#include "steingof/samplers.hpp"
#include "steingof/stein.hpp"

namespace steingof {

using nlohmann::json;

struct ExperimentConfig {
  std::string name = "experiment";
  int n = 100;
  int B = 200;
  int replications = 200;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  std::string test = "sksd";
  KernelSpec kernel = KernelSpec::gaussian_median();
  EstimatorSpec estimator;
  json family_json;
  json dgp_json;
  std::string sweep_param;
  std::vector<double> sweep_values;
  int workers = 1;
  PValueConvention convention = PValueConvention::paper;
  bool bandwidth_per_replicate = false;
  int neyman_mc = 0;  // 0 = 10 n
  json raw;
};

struct ResultRow {
  double sweep_value = 0.0;
  int replicate = 0;
  double statistic = 0.0;
  double p_value = 0.0;
  int reject = 0;
  VectorXd theta_hat;
  std::uint64_t seed = 0;
  std::int64_t elapsed_ms = 0;
  bool failed = false;  // estimator failure; statistic/p_value are NaN
};

struct AggregateRow {
  double sweep_value = 0.0;
  int replicates = 0;  // successful replicates
  int rejections = 0;
  int failures = 0;
  double rate = 0.0;
  double se = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<AggregateRow> aggregates;
};

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace harness_detail {

inline ChainConfig parse_chain(const json& j) {
  ChainConfig cfg;
  if (j.contains("burn_in")) cfg.burn_in = j.at("burn_in").get<std::int64_t>();
  if (j.contains("thin")) cfg.thin = j.at("thin").get<std::int64_t>();
  if (j.contains("step_size")) cfg.step_size = j.at("step_size").get<double>();
  return cfg;
}

inline KernelSpec parse_kernel(const json& j) {
  const std::string kind = j.value("kind", "gaussian");
  if (kind == "linear") return KernelSpec::linear();
  if (kind != "gaussian")
    throw std::invalid_argument("config: unknown kernel kind '" + kind + "'");
  if (!j.contains("bandwidth")) return KernelSpec::gaussian_median();
  const json& bw = j.at("bandwidth");
  if (bw.is_string()) {
    if (bw.get<std::string>() != "median")
      throw std::invalid_argument("config: bandwidth must be a number or 'median'");
    return KernelSpec::gaussian_median();
  }
  return KernelSpec::gaussian(bw.get<double>());
}

inline EstimatorSpec parse_estimator(const json& j) {
  EstimatorSpec spec;
  const std::string kind = j.value("kind", "mle_gaussian");
  if (kind == "mle_gaussian")
    spec.kind = EstimatorKind::mle_gaussian;
  else if (kind == "min_ksd_closed")
    spec.kind = EstimatorKind::min_ksd_closed;
  else if (kind == "score_matching_closed")
    spec.kind = EstimatorKind::score_matching_closed;
  else if (kind == "min_ksd_numeric")
    spec.kind = EstimatorKind::min_ksd_numeric;
  else
    throw std::invalid_argument("config: unknown estimator kind '" + kind + "'");
  if (j.contains("kernel")) spec.kernel = parse_kernel(j.at("kernel"));
  spec.max_iter = j.value("max_iter", spec.max_iter);
  spec.tolerance = j.value("tolerance", spec.tolerance);
  if (j.contains("init")) {
    const auto v = j.at("init").get<std::vector<double>>();
    spec.init = Eigen::Map<const VectorXd>(v.data(), v.size());
  }
  return spec;
}

inline VectorXd broadcast_vector(const json& j, int d, const char* what) {
  VectorXd out(d);
  if (j.is_number()) {
    out.setConstant(j.get<double>());
  } else if (j.is_array()) {
    const auto v = j.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != d)
      throw std::invalid_argument(std::string("config: ") + what +
                                  " has wrong length");
    out = Eigen::Map<const VectorXd>(v.data(), d);
  } else {
    throw std::invalid_argument(std::string("config: ") + what +
                                " must be a number or array");
  }
  return out;
}

inline int sweep_as_int(double value, const char* what) {
  const int v = static_cast<int>(std::llround(value));
  if (std::abs(value - v) > 1e-9)
    throw std::invalid_argument(std::string("config: sweep over ") + what +
                                " requires integer values");
  return v;
}

}  // namespace harness_detail

inline ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig cfg;
  cfg.raw = j;
  cfg.name = j.value("name", cfg.name);
  cfg.n = j.value("n", cfg.n);
  cfg.B = j.value("B", cfg.B);
  cfg.replications = j.value("replications", cfg.replications);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.test = j.value("test", cfg.test);
  cfg.workers = j.value("workers", cfg.workers);
  if (j.contains("kernel")) cfg.kernel = harness_detail::parse_kernel(j.at("kernel"));
  if (j.contains("estimator"))
    cfg.estimator = harness_detail::parse_estimator(j.at("estimator"));
  if (!j.contains("null_family"))
    throw std::invalid_argument("config: missing 'null_family'");
  cfg.family_json = j.at("null_family");
  if (!j.contains("dgp")) throw std::invalid_argument("config: missing 'dgp'");
  cfg.dgp_json = j.at("dgp");
  if (!j.contains("sweep")) throw std::invalid_argument("config: missing 'sweep'");
  cfg.sweep_param = j.at("sweep").value("param", "");
  cfg.sweep_values = j.at("sweep").at("values").get<std::vector<double>>();
  if (cfg.sweep_values.empty())
    throw std::invalid_argument("config: sweep grid must be nonempty");
  if (cfg.replications < 1)
    throw std::invalid_argument("config: replications must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw std::invalid_argument("config: alpha must lie in (0, 1)");
  const std::string conv = j.value("pvalue_convention", "paper");
  if (conv == "paper")
    cfg.convention = PValueConvention::paper;
  else if (conv == "plus-one")
    cfg.convention = PValueConvention::plus_one;
  else
    throw std::invalid_argument("config: unknown p-value convention '" + conv + "'");
  const std::string policy = j.value("bandwidth_policy", "frozen");
  if (policy == "per-replicate")
    cfg.bandwidth_per_replicate = true;
  else if (policy != "frozen")
    throw std::invalid_argument("config: unknown bandwidth policy '" + policy + "'");
  cfg.neyman_mc = j.value("neyman_mc", 0);
  return cfg;
}

/// Builds the null family. `sweep_param`/`sweep_value` override the swept
/// knob ("d" resizes the conditional Gaussian family).
inline std::shared_ptr<const ModelFamily> build_family(
    const json& j, const std::string& sweep_param = "", double sweep_value = 0.0) {
  const std::string kind = j.value("kind", "gaussian");
  if (kind == "gaussian") return std::make_shared<GaussianFamily>();
  if (kind == "gaussian_location")
    return std::make_shared<GaussianLocationFamily>();
  if (kind == "kef") {
    const int rank = j.value("rank", 1);
    const double kb = j.value("kappa_bandwidth", 1.0);
    const double rv = j.value("ref_var", 9.0);
    const ChainConfig chain =
        harness_detail::parse_chain(j.value("chain", json::object()));
    return std::make_shared<KefFamily>(rank, kb, rv, chain);
  }
  if (kind == "cond_gauss") {
    int d = j.value("d", 4);
    if (sweep_param == "d") d = harness_detail::sweep_as_int(sweep_value, "d");
    std::vector<ConditionalGaussianFamily::Edge> edges;
    const json pattern = j.value("pattern", json("ring"));
    if (pattern.is_string()) {
      const std::string p = pattern.get<std::string>();
      if (p == "ring")
        edges = ConditionalGaussianFamily::ring_edges(d);
      else if (p == "full")
        edges = ConditionalGaussianFamily::full_edges(d);
      else
        throw std::invalid_argument("config: unknown cond_gauss pattern '" + p + "'");
    } else {
      for (const auto& e : pattern)
        edges.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
    }
    const VectorXd g1 =
        harness_detail::broadcast_vector(j.value("gamma1", json(2.0)), d, "gamma1");
    const VectorXd g2 =
        harness_detail::broadcast_vector(j.value("gamma2", json(-0.5)), d, "gamma2");
    const ChainConfig chain =
        harness_detail::parse_chain(j.value("chain", json::object()));
    return std::make_shared<ConditionalGaussianFamily>(d, edges, g1, g2, chain);
  }
  throw std::invalid_argument("config: unknown family kind '" + kind + "'");
}

/// Builds the data-generating process for one replicate. `setup_seed` feeds
/// any randomized DGP parameters (conditional-Gaussian ring weights, random
/// KEF coefficients), so the draw is reproducible per replicate.
inline DgpSpec build_dgp(const json& j, int n, const std::string& sweep_param,
                         double sweep_value, std::uint64_t setup_seed) {
  DgpSpec spec;
  spec.n = n;
  const std::string kind = j.value("kind", "gaussian_shift");
  auto swept = [&](const char* name, double fallback) {
    return sweep_param == name ? sweep_value : j.value(name, fallback);
  };

  if (kind == "gaussian_shift") {
    spec.kind = DgpKind::gaussian_shift;
    spec.mu = swept("mu", 0.0);
    return spec;
  }
  if (kind == "student_t_shifted") {
    spec.kind = DgpKind::student_t_shifted;
    spec.nu = swept("nu", 3.0);
    return spec;
  }
  if (kind == "gaussian_mixture") {
    spec.kind = DgpKind::gaussian_mixture;
    spec.w = swept("w", 0.5);
    spec.delta = swept("delta", 0.0);
    return spec;
  }
  if (kind == "generalized_chi2") {
    spec.kind = DgpKind::generalized_chi2;
    spec.alpha_power = swept("alpha_power", 1.0);
    spec.shift = swept("shift", 0.0);
    return spec;
  }
  if (kind == "mult_local_alt") {
    spec.kind = DgpKind::mult_local_alt;
    spec.gamma = swept("gamma", 0.0);
    spec.tilt = j.value("tilt", "tanh");
    spec.base_mu = j.value("base_mu", 0.0);
    spec.base_sigma = j.value("base_sigma", 1.0);
    return spec;
  }
  if (kind == "add_local_alt") {
    spec.kind = DgpKind::add_local_alt;
    spec.gamma = swept("gamma", 0.0);
    spec.base_mu = j.value("base_mu", 0.0);
    spec.base_sigma = j.value("base_sigma", 1.0);
    spec.g_mean = j.value("g_mean", 2.0);
    spec.g_sd = j.value("g_sd", std::sqrt(3.0));
    return spec;
  }
  if (kind == "kef") {
    spec.kind = DgpKind::model_family;
    const int rank = j.value("rank", 2);
    const double kb = j.value("kappa_bandwidth", 1.0);
    const double rv = j.value("ref_var", 9.0);
    const ChainConfig chain =
        harness_detail::parse_chain(j.value("chain", json::object()));
    spec.family = std::make_shared<KefFamily>(rank, kb, rv, chain);
    VectorXd theta = VectorXd::Zero(rank);
    if (j.contains("theta")) {
      const auto v = j.at("theta").get<std::vector<double>>();
      if (static_cast<int>(v.size()) != rank)
        throw std::invalid_argument("config: kef theta has wrong length");
      theta = Eigen::Map<const VectorXd>(v.data(), rank);
    }
    if (j.contains("theta_random")) {
      const json& r = j.at("theta_random");
      Rng rng(setup_seed);
      const double lo = r.value("low", -10.0);
      const double hi = r.value("high", 10.0);
      for (const auto& idx : r.at("indices")) {
        const int i = idx.get<int>();
        if (i < 0 || i >= rank)
          throw std::invalid_argument("config: theta_random index out of range");
        theta[i] = rng.uniform(lo, hi);
      }
    }
    // swept coefficients: theta1..theta9 address theta[digit - 1]
    if (sweep_param.rfind("theta", 0) == 0 && sweep_param.size() == 6) {
      const int i = sweep_param[5] - '1';
      if (i < 0 || i >= rank)
        throw std::invalid_argument("config: swept theta index out of range");
      theta[i] = sweep_value;
    }
    spec.theta = theta;
    return spec;
  }
  if (kind == "cond_gauss_grid") {
    // 1D grid with reach 2: ring edges -w_i plus second-neighbor edges
    // -1e-2 eps.
    spec.kind = DgpKind::model_family;
    int d = j.value("d", 8);
    if (sweep_param == "d") d = harness_detail::sweep_as_int(sweep_value, "d");
    const double eps = sweep_param == "eps" ? sweep_value : j.value("eps", 0.0);
    if (eps < 0.0) throw std::invalid_argument("config: eps must be >= 0");
    VectorXd w(d);
    const json wj = j.value("w", json("random"));
    if (wj.is_string()) {
      if (wj.get<std::string>() != "random")
        throw std::invalid_argument("config: cond_gauss_grid w must be a number, "
                                    "an array, or 'random'");
      Rng rng(setup_seed);
      for (int i = 0; i < d; ++i) w[i] = rng.uniform(2.0, 2.0 + d / 2.0);
    } else {
      w = harness_detail::broadcast_vector(wj, d, "w");
    }
    const VectorXd g1 =
        harness_detail::broadcast_vector(j.value("gamma1", json(2.0)), d, "gamma1");
    const VectorXd g2 =
        harness_detail::broadcast_vector(j.value("gamma2", json(-0.5)), d, "gamma2");
    const ChainConfig chain =
        harness_detail::parse_chain(j.value("chain", json::object()));

    auto ring = ConditionalGaussianFamily::ring_edges(d);
    auto second = ConditionalGaussianFamily::second_neighbor_edges(d);
    std::vector<ConditionalGaussianFamily::Edge> edges = ring;
    edges.insert(edges.end(), second.begin(), second.end());
    VectorXd theta(edges.size());
    for (std::size_t e = 0; e < ring.size(); ++e) {
      const auto [a, b] = ring[e];
      // edge (a, a+1) carries -w[a+1]; the wrap edge (0, d-1) carries -w[0]
      theta[e] = (b == a + 1) ? -w[b] : -w[0];
    }
    for (std::size_t e = 0; e < second.size(); ++e)
      theta[ring.size() + e] = -1e-2 * eps;
    spec.family = std::make_shared<ConditionalGaussianFamily>(d, edges, g1, g2,
                                                              chain);
    spec.theta = theta;
    return spec;
  }
  throw std::invalid_argument("config: unknown dgp kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Test dispatch
// ---------------------------------------------------------------------------

namespace harness_detail {

inline std::vector<double> column(const SampleBatch& x) {
  if (x.cols() != 1)
    throw std::invalid_argument("this test requires univariate data");
  return {x.col(0).data(), x.col(0).data() + x.rows()};
}

inline StatisticFn make_baseline_statistic(const std::string& test,
                                           const ModelFamily& family,
                                           const KernelSpec& kernel) {
  if (test == "ks") {
    if (!family.has_cdf())
      throw std::invalid_argument("ks test: family exposes no CDF");
    return [&family](const VectorXd& theta, const SampleBatch& x, std::uint64_t) {
      return ks_statistic(column(x),
                          [&](double v) { return family.cdf(theta, v); });
    };
  }
  if (test == "w1") {
    if (!family.has_sampler())
      throw std::invalid_argument("w1 test: family exposes no sampler");
    return [&family](const VectorXd& theta, const SampleBatch& x,
                     std::uint64_t stat_seed) {
      auto sampler = [&](int m, std::uint64_t s) {
        return column(family.sample(theta, m, s));
      };
      return w1_statistic(column(x), sampler, static_cast<int>(x.rows()),
                          stat_seed);
    };
  }
  if (test == "mmd") {
    if (!family.has_sampler())
      throw std::invalid_argument("mmd test: family exposes no sampler");
    return [&family, kernel](const VectorXd& theta, const SampleBatch& x,
                             std::uint64_t stat_seed) {
      const SampleBatch y =
          family.sample(theta, static_cast<int>(x.rows()), stat_seed);
      // under the per-replicate policy the median rule reaches this point
      // unresolved; fix it from the evaluated batch
      return mmd_v_statistic(x, y, resolve_bandwidth(kernel, x));
    };
  }
  if (test == "ad") {
    const std::string name = family.name();
    if (name != "gaussian" && name != "gaussian_location")
      throw std::invalid_argument("ad test: Gaussian null required");
    const bool location_only = name == "gaussian_location";
    return [location_only](const VectorXd& theta, const SampleBatch& x,
                           std::uint64_t) {
      const double sigma = location_only ? 1.0 : theta[1];
      return anderson_darling_statistic(column(x), theta[0], sigma);
    };
  }
  if (test == "lilliefors") {
    return [](const VectorXd&, const SampleBatch& x, std::uint64_t) {
      return lilliefors_statistic(column(x));
    };
  }
  if (test == "lrt") {
    // Studentized mean log-likelihood under the fitted null (Vuong-style
    // t-ratio of the individual log-likelihoods), two-sided via |.|.
    if (!family.has_normalized_logdensity())
      throw std::invalid_argument("lrt test: tractable likelihood required");
    return [&family](const VectorXd& theta, const SampleBatch& x, std::uint64_t) {
      const auto n = x.rows();
      VectorXd ll(n);
      for (Eigen::Index i = 0; i < n; ++i)
        ll[i] = family.normalized_logdensity(theta, x.row(i).transpose());
      const double mean = ll.mean();
      const double sd =
          std::sqrt((ll.array() - mean).square().sum() / std::max<double>(n - 1, 1));
      if (!(sd > 0.0)) return 0.0;
      return std::abs(std::sqrt(static_cast<double>(n)) * mean / sd);
    };
  }
  throw std::invalid_argument("unknown test kind '" + test + "'");
}

}  // namespace harness_detail

/// Runs a configured test end-to-end on the given data.
inline TestReport run_configured_test(const std::string& test,
                                      const ModelFamily& family,
                                      const EstimatorSpec& estimator,
                                      const KernelSpec& kernel,
                                      const SampleBatch& samples, int B,
                                      double alpha, std::uint64_t seed,
                                      const BootstrapOptions& options = {},
                                      int neyman_mc = 0) {
  if (test == "sksd")
    return sksd_test(family, estimator, kernel, samples, B, alpha, seed, options);
  if (test == "neyman-sksd")
    return neyman_sksd_test(family, estimator, kernel, samples, B, alpha, seed,
                            neyman_mc, options);
  EstimatorSpec est = estimator;
  KernelSpec stat_kernel = kernel;
  if (!options.bandwidth_per_replicate) {
    est.kernel = resolve_bandwidth(est.kernel, samples);
    stat_kernel = resolve_bandwidth(stat_kernel, samples);
  }
  const StatisticFn statistic =
      harness_detail::make_baseline_statistic(test, family, stat_kernel);
  return bootstrap_calibrate(statistic, family, est, samples, B, alpha, seed,
                             options);
}

// ---------------------------------------------------------------------------
// Power experiments
// ---------------------------------------------------------------------------

inline ExperimentResult run_power_experiment(const ExperimentConfig& cfg) {
  const std::size_t sweeps = cfg.sweep_values.size();
  const std::size_t reps = static_cast<std::size_t>(cfg.replications);
  ExperimentResult result;
  result.rows.resize(sweeps * reps);

  parallel_for(sweeps * reps, cfg.workers, [&](std::size_t job) {
    const std::size_t s = job / reps;
    const int rep = static_cast<int>(job % reps);
    const double value = cfg.sweep_values[s];
    const std::uint64_t seed_rep =
        child_seed(child_seed(cfg.seed, s, "sweep"), rep, "replicate");

    ResultRow row;
    row.sweep_value = value;
    row.replicate = rep;
    row.seed = seed_rep;

    const auto t0 = std::chrono::steady_clock::now();
    const auto family = build_family(cfg.family_json, cfg.sweep_param, value);
    const DgpSpec dgp = build_dgp(cfg.dgp_json, cfg.n, cfg.sweep_param, value,
                                  child_seed(seed_rep, 0, "dgp-setup"));
    const SampleBatch data = dgp_sample(dgp, child_seed(seed_rep, 1, "data"));

    BootstrapOptions options;
    options.convention = cfg.convention;
    options.bandwidth_per_replicate = cfg.bandwidth_per_replicate;
    options.threads = 1;  // replicates already run in parallel
    try {
      const TestReport report = run_configured_test(
          cfg.test, *family, cfg.estimator, cfg.kernel, data, cfg.B, cfg.alpha,
          child_seed(seed_rep, 2, "test"), options, cfg.neyman_mc);
      row.statistic = report.statistic;
      row.p_value = report.p_value;
      row.reject = report.reject ? 1 : 0;
      row.theta_hat = report.theta_hat;
    } catch (const EstimationError&) {
      row.failed = true;
      row.statistic = std::nan("");
      row.p_value = std::nan("");
      row.reject = 0;
      row.theta_hat = VectorXd::Zero(family->param_dim());
    }
    row.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    result.rows[job] = std::move(row);
  });

  for (std::size_t s = 0; s < sweeps; ++s) {
    AggregateRow agg;
    agg.sweep_value = cfg.sweep_values[s];
    for (std::size_t r = 0; r < reps; ++r) {
      const ResultRow& row = result.rows[s * reps + r];
      if (row.failed) {
        ++agg.failures;
        continue;
      }
      ++agg.replicates;
      agg.rejections += row.reject;
    }
    if (agg.replicates > 0) {
      agg.rate = static_cast<double>(agg.rejections) / agg.replicates;
      agg.se = std::sqrt(agg.rate * (1.0 - agg.rate) / agg.replicates);
    }
    result.aggregates.push_back(agg);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Result persistence
// ---------------------------------------------------------------------------

namespace harness_detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace harness_detail

/// Writes results.csv (RFC 4180, LF line endings) and a config.json sidecar
/// holding the full configuration and the aggregated rejection rates. The
/// CSV header is `sweep_value,replicate,statistic,p_value,reject,seed,
/// elapsed_ms` followed by one theta_<i> column per parameter.
inline void emit_results(const std::vector<ResultRow>& rows,
                         const std::vector<AggregateRow>& aggregates,
                         const json& config,
                         const std::filesystem::path& out_dir) {
  if (rows.empty()) throw std::invalid_argument("emit_results: no rows");
  std::filesystem::create_directories(out_dir);

  Eigen::Index k = 0;
  for (const ResultRow& r : rows) k = std::max(k, r.theta_hat.size());

  const std::filesystem::path csv_path = out_dir / "results.csv";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("emit_results: cannot write " + csv_path.string());
  csv << "sweep_value,replicate,statistic,p_value,reject,seed,elapsed_ms";
  for (Eigen::Index c = 0; c < k; ++c) csv << ",theta_" << c;
  csv << "\n";
  for (const ResultRow& r : rows) {
    csv << harness_detail::format_double(r.sweep_value) << ',' << r.replicate
        << ',' << harness_detail::format_double(r.statistic) << ','
        << harness_detail::format_double(r.p_value) << ',' << r.reject << ','
        << r.seed << ',' << r.elapsed_ms;
    for (Eigen::Index c = 0; c < k; ++c) {
      csv << ',';
      if (c < r.theta_hat.size())
        csv << harness_detail::format_double(r.theta_hat[c]);
    }
    csv << "\n";
  }
  csv.close();

  json agg = json::array();
  for (const AggregateRow& a : aggregates) {
    agg.push_back({{"sweep_value", a.sweep_value},
                   {"replicates", a.replicates},
                   {"rejections", a.rejections},
                   {"failures", a.failures},
                   {"rejection_rate", a.rate},
                   {"binomial_se", a.se}});
  }
  json sidecar = {{"config", config}, {"aggregates", agg}};
  std::ofstream side(out_dir / "config.json", std::ios::binary);
  if (!side)
    throw std::runtime_error("emit_results: cannot write config sidecar");
  side << sidecar.dump(2) << "\n";
}

/// Reads back an emitted results.csv (round-trip checks and the CLI).
inline std::vector<ResultRow> read_result_rows(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty results file");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> tok;
    std::stringstream ss(line);
    std::string t;
    while (std::getline(ss, t, ',')) tok.push_back(t);
    if (tok.size() < 7) throw std::runtime_error("malformed results row");
    ResultRow r;
    r.sweep_value = std::strtod(tok[0].c_str(), nullptr);
    r.replicate = std::atoi(tok[1].c_str());
    r.statistic = std::strtod(tok[2].c_str(), nullptr);
    r.p_value = std::strtod(tok[3].c_str(), nullptr);
    r.reject = std::atoi(tok[4].c_str());
    r.seed = std::strtoull(tok[5].c_str(), nullptr, 10);
    r.elapsed_ms = std::strtoll(tok[6].c_str(), nullptr, 10);
    r.failed = std::isnan(r.p_value);
    std::vector<double> theta;
    for (std::size_t i = 7; i < tok.size(); ++i)
      if (!tok[i].empty()) theta.push_back(std::strtod(tok[i].c_str(), nullptr));
    r.theta_hat = Eigen::Map<const VectorXd>(theta.data(), theta.size());
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Data files
// ---------------------------------------------------------------------------

/// Reads a data CSV: one observation per row, comma-separated coordinates.
/// A non-numeric first row is treated as a header. Empty files, ragged rows,
/// and non-finite values are errors.
inline SampleBatch read_sample_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read data file " + path.string());

  auto parse_field = [](const std::string& field, double& out) {
    const char* begin = field.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    if (end == begin) return false;
    while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
    return *end == '\0';
  };

  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string field;
    bool numeric = true;
    while (std::getline(ss, field, ',')) {
      double v = 0.0;
      if (!parse_field(field, v)) {
        numeric = false;
        break;
      }
      vals.push_back(v);
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header
      }
      throw std::runtime_error("data file " + path.string() + ": line " +
                               std::to_string(lineno) + " is not numeric");
    }
    first = false;
    for (double v : vals)
      if (!std::isfinite(v))
        throw std::runtime_error("data file " + path.string() + ": line " +
                                 std::to_string(lineno) +
                                 " contains a non-finite value");
    if (!rows.empty() && vals.size() != rows.front().size())
      throw std::runtime_error("data file " + path.string() + ": line " +
                               std::to_string(lineno) + " has " +
                               std::to_string(vals.size()) +
                               " fields, expected " +
                               std::to_string(rows.front().size()));
    rows.push_back(std::move(vals));
  }
  if (rows.empty())
    throw std::runtime_error("data file " + path.string() + ": no data rows");
  SampleBatch out(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return out;
}

/// Report serialization used by the CLI.
inline json report_to_json(const TestReport& report, const std::string& test) {
  json theta = json::array();
  for (Eigen::Index i = 0; i < report.theta_hat.size(); ++i)
    theta.push_back(report.theta_hat[i]);
  return json{{"test", test},
              {"statistic", report.statistic},
              {"p_value", report.p_value},
              {"reject", report.reject},
              {"theta_hat", theta},
              {"B", report.bootstrap_size},
              {"requested_B", report.requested_bootstrap},
              {"failed_replicates", report.failed_replicates},
              {"alpha", report.alpha},
              {"seed", report.seed},
              {"wall_time_sec", report.wall_time_sec}};
}

}  // namespace steingof
