#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace steingof {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// n x d matrix of observations, one row per data point.
using SampleBatch = Eigen::MatrixXd;

/// Thrown when a nuisance estimator cannot produce a parameter estimate.
/// The bootstrap catches this on resampled data and discards the replicate;
/// on observed data it is fatal.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Counter-based seed derivation. The child stream is a pure function of
/// (seed, index, stream), so replicates can run in any order or on any
/// worker without changing results.
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t index,
                                std::string_view stream) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ detail::splitmix64(index + 0x9e3779b97f4a7c15ULL));
  return detail::splitmix64(h ^ detail::fnv1a(stream));
}

/// Deterministic random stream built on mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return unif_(gen_); }
  double uniform(double a, double b) { return a + (b - a) * unif_(gen_); }
  double normal() { return norm_(gen_); }
  double normal(double mean, double sd) { return mean + sd * norm_(gen_); }
  double student_t(double nu) {
    std::student_t_distribution<double> dist(nu);
    return dist(gen_);
  }
  bool bernoulli(double p) { return unif_(gen_) < p; }
  /// Rademacher weight in {-1, +1}.
  double sign() { return unif_(gen_) < 0.5 ? -1.0 : 1.0; }

  VectorXd normal_vector(int d) {
    VectorXd z(d);
    for (int i = 0; i < d; ++i) z[i] = norm_(gen_);
    return z;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  std::normal_distribution<double> norm_{0.0, 1.0};
};

/// Compensated (Kahan) accumulator for long mixed-sign sums.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - carry_;
    const double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// MCMC chain settings shared by the MALA and Gibbs samplers.
struct ChainConfig {
  std::int64_t burn_in = 10000;  ///< discarded sweeps/steps before collection
  std::int64_t thin = 20;        ///< keep one sample per this many sweeps/steps
  double step_size = 0.0;        ///< MALA proposal scale; 0 = pilot-adapted
  std::uint64_t seed = 0;
};

/// Runs body(i) for i in [0, count). Each index must be independent of the
/// others; outputs should be written to preallocated per-index slots so the
/// result does not depend on the number of workers.
inline void parallel_for(std::size_t count, int threads,
                         const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  const int workers = static_cast<int>(
      std::min<std::size_t>(count, static_cast<std::size_t>(threads)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace steingof
