#pragma once

#include <boost/math/distributions/beta.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>

#include "divas/core.hpp"

namespace divas {

/// Limiting eigenvalue law of the scaled Gram matrix of an iid noise matrix.
/// The aspect ratio is kept in (0, 1]; a raw ratio above one is handled by the
/// same continuous law plus the point mass reported by mp_point_mass.
struct MPLaw {
  double beta = 1.0;    // aspect ratio, (d AND n) / (d OR n), in (0, 1]
  double sigma2 = 1.0;  // noise variance

  void validate() const {
    require(beta > 0.0 && beta <= 1.0, "MPLaw: beta must be in (0, 1]");
    require(sigma2 > 0.0, "MPLaw: sigma2 must be positive");
  }

  double support_lower() const {
    const double s = 1.0 - std::sqrt(beta);
    return sigma2 * s * s;
  }
  double support_upper() const {
    const double s = 1.0 + std::sqrt(beta);
    return sigma2 * s * s;
  }
};

/// Mass at zero for a raw aspect ratio (rows/cols or cols/rows) above one.
inline double mp_point_mass(double beta_raw) {
  require(beta_raw > 0.0, "mp_point_mass: beta_raw must be positive");
  return beta_raw > 1.0 ? 1.0 - 1.0 / beta_raw : 0.0;
}

/// Continuous density at lambda. Zero outside the support. At a zero lower
/// edge (beta = 1) the integrable singularity is reported as +inf.
inline double mp_density(const MPLaw& law, double lambda) {
  law.validate();
  require(lambda >= 0.0, "mp_density: lambda must be nonnegative");
  const double lo = law.support_lower();
  const double hi = law.support_upper();
  if (lambda < lo || lambda > hi) return 0.0;
  if (lambda == 0.0) return std::numeric_limits<double>::infinity();
  const double x = lambda / law.sigma2;
  const double sb = std::sqrt(law.beta);
  const double a = (1.0 + sb) * (1.0 + sb) - x;
  const double b = x - (1.0 - sb) * (1.0 - sb);
  const double prod = a * b;
  if (prod <= 0.0) return 0.0;  // edge roundoff
  return std::sqrt(prod) / (2.0 * kPi * law.beta * lambda);
}

namespace detail {

// The density is integrated in the angle variable t defined by
//   lambda / sigma2 = 1 + beta - 2 sqrt(beta) cos(t),  t in [0, pi],
// which removes the inverse-square-root edge singularities: the integrand
//   (2/pi) sin(t)^2 / (1 + beta - 2 sqrt(beta) cos(t))
// is analytic on [0, pi] for every beta in (0, 1].
inline double mp_angle_from_lambda(const MPLaw& law, double lambda) {
  const double x = lambda / law.sigma2;
  const double sb = std::sqrt(law.beta);
  double c = (1.0 + law.beta - x) / (2.0 * sb);
  if (c > 1.0) c = 1.0;
  if (c < -1.0) c = -1.0;
  return std::acos(c);
}

inline double mp_lambda_from_angle(const MPLaw& law, double t) {
  return law.sigma2 * (1.0 + law.beta - 2.0 * std::sqrt(law.beta) * std::cos(t));
}

inline double mp_angle_integrand(double beta, double t) {
  const double s = std::sin(t);
  const double denom = 1.0 + beta - 2.0 * std::sqrt(beta) * std::cos(t);
  if (denom <= 0.0) {
    // beta = 1, t -> 0: sin^2 t / (2 - 2 cos t) -> cos^2(t/2)
    const double h = std::cos(0.5 * t);
    return (2.0 / kPi) * h * h;
  }
  return (2.0 / kPi) * s * s / denom;
}

inline double mp_cdf_from_angle(double beta, double t_hi) {
  if (t_hi <= 0.0) return 0.0;
  using boost::math::quadrature::gauss_kronrod;
  const double v = gauss_kronrod<double, 61>::integrate(
      [beta](double t) { return mp_angle_integrand(beta, t); }, 0.0, t_hi, 8, 1e-13);
  if (v < 0.0) return 0.0;
  if (v > 1.0) return 1.0;
  return v;
}

}  // namespace detail

inline double mp_cdf(const MPLaw& law, double lambda) {
  law.validate();
  require(lambda >= 0.0, "mp_cdf: lambda must be nonnegative");
  if (lambda <= law.support_lower()) return 0.0;
  if (lambda >= law.support_upper()) return 1.0;
  return detail::mp_cdf_from_angle(law.beta, detail::mp_angle_from_lambda(law, lambda));
}

/// Inverse CDF. Solved in the angle variable with bisection-safeguarded
/// Newton steps; the returned lambda satisfies |mp_cdf(lambda) - q| <= 1e-10.
inline double mp_quantile(const MPLaw& law, double q) {
  law.validate();
  require(q > 0.0 && q < 1.0, "mp_quantile: q must be in (0, 1)");
  double lo = 0.0, hi = kPi;
  double t = kPi * q;  // crude seed, refined below
  for (int it = 0; it < 200; ++it) {
    const double f = detail::mp_cdf_from_angle(law.beta, t) - q;
    if (std::abs(f) <= 1e-11) break;
    if (f > 0.0)
      hi = t;
    else
      lo = t;
    const double d = detail::mp_angle_integrand(law.beta, t);
    double t_next = d > 0.0 ? t - f / d : 0.5 * (lo + hi);
    if (!(t_next > lo && t_next < hi)) t_next = 0.5 * (lo + hi);
    if (std::abs(t_next - t) < 1e-15) {
      t = t_next;
      break;
    }
    t = t_next;
  }
  return detail::mp_lambda_from_angle(law, t);
}

/// Inverse-CDF sampling; reproducible for a given stream.
inline double mp_sample(const MPLaw& law, Rng& rng) { return mp_quantile(law, rng.uniform()); }

/// q-quantile, in degrees, of the angle between a uniformly random unit
/// vector in R^n and a fixed r-dimensional subspace. The squared cosine of
/// that angle is Beta(r/2, (n-r)/2) distributed, so the quantile has a closed
/// form through the Beta inverse CDF.
inline double random_direction_angle_quantile(Index ambient_dim, Index subspace_dim, double q) {
  require(subspace_dim >= 1, "random_direction_angle_quantile: subspace_dim must be >= 1");
  require(subspace_dim < ambient_dim,
          "random_direction_angle_quantile: subspace_dim must be < ambient_dim");
  require(q > 0.0 && q < 1.0, "random_direction_angle_quantile: q must be in (0, 1)");
  const boost::math::beta_distribution<double> law(0.5 * static_cast<double>(subspace_dim),
                                                   0.5 * static_cast<double>(ambient_dim - subspace_dim));
  // P(angle <= a) = P(cos^2 >= cos^2 a), so the angle q-quantile needs the
  // (1-q)-quantile of the squared cosine.
  const double c2 = boost::math::quantile(law, 1.0 - q);
  return acos_deg_clamped(std::sqrt(c2));
}

}  // namespace divas
