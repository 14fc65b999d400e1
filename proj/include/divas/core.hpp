#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace divas {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

constexpr double kPi = 3.141592653589793238462643383279502884;

inline double deg_from_rad(double r) { return r * (180.0 / kPi); }
inline double rad_from_deg(double d) { return d * (kPi / 180.0); }

/// Inverse cosine in degrees with the argument clamped to [0, 1] so that
/// roundoff like 1 + 1e-16 maps to 0 degrees instead of NaN.
inline double acos_deg_clamped(double c) {
  if (c > 1.0) c = 1.0;
  if (c < 0.0) c = 0.0;
  return deg_from_rad(std::acos(c));
}

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Deterministic random stream. Uniform and normal draws are generated with
/// explicit code on top of std::mt19937_64, so a (seed, call sequence) pair
/// fully determines the values produced.
///
/// Child streams are derived from the parent seed and a tag, not from engine
/// state, so independent work items (bootstrap replications, noise traces)
/// can draw in parallel without coupling to scheduling order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng child(std::uint64_t tag) const {
    return Rng(detail::splitmix64(seed_ ^ (0x517cc1b727220a95ULL * (tag + 1))));
  }

  /// Uniform on (0, 1); endpoints excluded.
  double uniform() {
    const std::uint64_t bits = engine_() >> 11;  // 53 random bits
    double u = (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    return u;
  }

  /// Standard normal via Box-Muller; pairs cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Matrix gaussian_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Global worker cap used by parallel_for; 0 means hardware concurrency.
inline int& worker_count() {
  static int n = 0;
  return n;
}

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Results must be
/// written to preallocated, disjoint slots so the output is independent of
/// scheduling.
inline void parallel_for(Index n, const std::function<void(Index)>& fn) {
  int workers = worker_count() > 0 ? worker_count()
                                   : static_cast<int>(std::thread::hardware_concurrency());
  if (workers < 1) workers = 1;
  if (workers == 1 || n <= 1) {
    for (Index i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const Index i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed.load()) std::rethrow_exception(error);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

}  // namespace divas
