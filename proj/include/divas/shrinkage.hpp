#pragma once

#include <algorithm>
#include <cmath>

#include "divas/block.hpp"
#include "divas/core.hpp"
#include "divas/mp.hpp"
#include "divas/svd.hpp"

namespace divas {

enum class Shrinker { optimal, soft, hard };

/// Operator-norm-optimal shrinker for unit-variance noise. Zero exactly when
/// the scaled singular value sits at or below the bulk edge 1 + sqrt(beta).
inline double shrink_optimal(double nu, double beta) {
  require(nu >= 0.0, "shrink_optimal: nu must be nonnegative");
  require(beta > 0.0 && beta <= 1.0, "shrink_optimal: beta must be in (0, 1]");
  const double edge = 1.0 + std::sqrt(beta);
  if (nu < edge) return 0.0;
  const double a = nu * nu - beta - 1.0;
  const double disc = a * a - 4.0 * beta;
  const double root = disc > 0.0 ? std::sqrt(disc) : 0.0;
  return std::sqrt(0.5 * (a + root));
}

inline double shrink_soft(double nu, double c) {
  require(c >= 0.0, "shrink_soft: threshold must be nonnegative");
  return std::max(0.0, nu - c);
}

inline double shrink_hard(double nu, double c) {
  require(c >= 0.0, "shrink_hard: threshold must be nonnegative");
  return nu >= c ? nu : 0.0;
}

/// Noise scale from the median raw singular value: the median of the
/// matching unit-variance bulk is MP(beta) at q = 0.5, scaled back up by the
/// larger matrix dimension.
inline double estimate_sigma(const Vector& raw_singulars, Index d, Index n) {
  require(raw_singulars.size() >= 2, "estimate_sigma: need at least 2 singular values");
  require(raw_singulars.size() == std::min(d, n), "estimate_sigma: spectrum length mismatch");
  Vector s = raw_singulars;
  std::sort(s.data(), s.data() + s.size());
  const Index m = s.size();
  const double median = (m % 2 == 1) ? s(m / 2) : 0.5 * (s(m / 2 - 1) + s(m / 2));
  require(median > 0.0, "estimate_sigma: all singular values are zero");
  const double beta = static_cast<double>(std::min(d, n)) / static_cast<double>(std::max(d, n));
  const double mp_median = mp_quantile(MPLaw{beta, 1.0}, 0.5);
  return median / std::sqrt(static_cast<double>(std::max(d, n)) * mp_median);
}

/// Per-block low-rank signal estimate: orthonormal bases for the estimated
/// object- and trait-space subspaces, shrunken singular values, the raw
/// spectrum, and the noise scale.
struct SignalEstimate {
  Matrix u_hat;         // d x r_hat
  Vector d_hat;         // r_hat shrunken singular values, descending, positive
  Matrix v_hat;         // n x r_hat
  Index r_hat = 0;
  double sigma_hat = 0.0;
  Vector raw_singulars; // full spectrum of the data matrix
  double aspect_beta = 1.0;

  bool empty() const { return r_hat == 0; }

  Matrix reconstruct() const {
    if (r_hat == 0) return Matrix::Zero(u_hat.rows(), v_hat.rows());
    return u_hat * d_hat.asDiagonal() * v_hat.transpose();
  }
};

/// Shrinks the spectrum at unit noise scale and truncates the bases to the
/// surviving rank. Raw singular values are moved to the unit-noise scale by
/// 1 / (sigma_hat * sqrt(d OR n)), shrunk, and scaled back. An all-noise
/// block comes back with r_hat = 0, which is a valid (empty) estimate.
inline SignalEstimate extract_signal(const DataBlock& block, Shrinker shrinker = Shrinker::optimal) {
  block.validate();
  const Index d = block.traits(), n = block.objects();
  const ThinSvd svd = thin_svd(block.values);

  SignalEstimate est;
  est.raw_singulars = svd.singulars;
  est.aspect_beta = static_cast<double>(std::min(d, n)) / static_cast<double>(std::max(d, n));
  if (svd.singulars.maxCoeff() <= 0.0) {
    est.sigma_hat = 0.0;
    est.u_hat = Matrix(d, 0);
    est.v_hat = Matrix(n, 0);
    est.d_hat = Vector(0);
    return est;
  }
  est.sigma_hat = estimate_sigma(svd.singulars, d, n);

  const double scale = est.sigma_hat * std::sqrt(static_cast<double>(std::max(d, n)));
  const double edge = 1.0 + std::sqrt(est.aspect_beta);
  Vector shrunk(svd.singulars.size());
  for (Index i = 0; i < svd.singulars.size(); ++i) {
    const double nu = svd.singulars(i) / scale;
    double eta = 0.0;
    switch (shrinker) {
      case Shrinker::optimal: eta = shrink_optimal(nu, est.aspect_beta); break;
      case Shrinker::soft: eta = shrink_soft(nu, edge); break;
      case Shrinker::hard: eta = shrink_hard(nu, edge); break;
    }
    shrunk(i) = scale * eta;
  }

  Index r = 0;
  while (r < shrunk.size() && shrunk(r) > 0.0) ++r;
  est.r_hat = r;
  est.u_hat = svd.u.leftCols(r);
  est.v_hat = svd.v.leftCols(r);
  est.d_hat = shrunk.head(r);
  return est;
}

}  // namespace divas
