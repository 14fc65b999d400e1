#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <vector>

#include "divas/angles.hpp"
#include "divas/block.hpp"
#include "divas/core.hpp"
#include "divas/mp.hpp"
#include "divas/noise.hpp"
#include "divas/shrinkage.hpp"
#include "divas/svd.hpp"

namespace divas {

struct BootstrapConfig {
  double xi = 1.0 - 2.0 / (1.0 + std::sqrt(5.0));  // ~0.382, must be in (0, 0.5]
  int replications = 400;
  double bound_quantile = 0.95;
  double theta0_quantile = 0.05;
  bool redraw_noise = false;  // re-impute the residual inside each replication

  void validate() const {
    require(xi > 0.0 && xi <= 0.5, "BootstrapConfig: xi must be in (0, 0.5]");
    require(replications >= 2, "BootstrapConfig: need at least 2 replications");
    require(bound_quantile > 0.0 && bound_quantile < 1.0, "BootstrapConfig: bad bound quantile");
    require(theta0_quantile > 0.0 && theta0_quantile < 1.0, "BootstrapConfig: bad theta0 quantile");
  }
};

/// Subspace perturbation bounds for one block: the bound-quantile maximum
/// principal angle between replicate truth and replicate estimate, in trait
/// space (phi_hat) and object space (psi_hat), at the filtered rank.
struct PerturbationBounds {
  double phi_hat = 90.0;       // trait-space bound, degrees
  double psi_hat = 90.0;       // object-space bound, degrees
  double theta0_trait = 0.0;   // random-direction bound in R^n at the filtered rank
  double theta0_object = 0.0;  // random-direction bound in R^d at the filtered rank
  Index filtered_rank = 0;
  int replications = 0;
  double quantile = 0.95;
};

struct BootstrapResult {
  PerturbationBounds bounds;
  BootstrapCache cache;  // alignment matrices at the filtered rank
  Matrix u_check;        // d x filtered_rank, leading data basis columns
  Matrix v_check;        // n x filtered_rank
  Matrix trait_angles;   // replication x candidate-rank recorded max angles
  Matrix object_angles;
};

namespace detail {

// Null angle for a rank-j subspace; degenerate (0) once j fills the ambient
// space, where the comparison below can never pass.
inline double theta0_at(Index ambient, Index j, double q) {
  if (j >= ambient) return 0.0;
  return random_direction_angle_quantile(ambient, j, q);
}

// ceil(q * M)-th order statistic, 1-indexed; deterministic integer rule.
inline Index order_stat_index(double q, Index m) {
  auto k = static_cast<Index>(std::ceil(q * static_cast<double>(m)));
  return std::clamp<Index>(k, 1, m);
}

inline Matrix centered_orthonormal(Rng& rng, Index rows, Index cols, bool remove_constant) {
  Matrix g = rng.gaussian_matrix(rows, cols);
  if (remove_constant) g.rowwise() -= g.colwise().mean();
  return orthonormalize(g);
}

}  // namespace detail

/// Rotational bootstrap. Each replication plants the estimated singular
/// values on freshly drawn random orthonormal bases (re-centred like the
/// data), adds the imputed residual, re-estimates, and records the maximum
/// principal angle between replicate truth and the leading-j replicate
/// estimate for every j up to r_hat, in both spaces. The rank is then
/// filtered to the longest run of ranks whose bound-quantile angle stays
/// below xi * theta0 in both spaces, which keeps the later inference away
/// from the regime where a direction could look simultaneously significant
/// and arbitrary.
inline BootstrapResult rotational_bootstrap(const DataBlock& block, const SignalEstimate& est,
                                            const ImputedNoise& noise, const BootstrapConfig& cfg,
                                            Rng& rng) {
  cfg.validate();
  require(est.r_hat >= 1, "rotational_bootstrap: estimate is empty");
  require(noise.values.rows() == block.traits() && noise.values.cols() == block.objects(),
          "rotational_bootstrap: noise matrix does not match block");

  const Index d = block.traits(), n = block.objects();
  const Index r = est.r_hat;
  const auto m_reps = static_cast<Index>(cfg.replications);

  Matrix trait_angles(m_reps, r);  // degrees, replication x rank
  Matrix object_angles(m_reps, r);
  std::vector<Matrix> trait_full(static_cast<std::size_t>(m_reps));
  std::vector<Matrix> object_full(static_cast<std::size_t>(m_reps));

  parallel_for(m_reps, [&](Index m) {
    Rng local = rng.child(static_cast<std::uint64_t>(m));
    const Matrix u_rep = detail::centered_orthonormal(local, d, r, block.object_centered);
    const Matrix v_rep = detail::centered_orthonormal(local, n, r, block.trait_centered);

    Matrix x_rep;
    if (cfg.redraw_noise) {
      Rng noise_rng = local.child(0x6e6f6973ULL);
      x_rep = impute_noise(block, est, noise_rng).values;
    } else {
      x_rep = noise.values;
    }
    x_rep.noalias() += u_rep * est.d_hat.asDiagonal() * v_rep.transpose();

    const ThinSvd lead = leading_svd(x_rep, r);
    const Matrix t_align = v_rep.transpose() * lead.v;  // r x r
    const Matrix o_align = u_rep.transpose() * lead.u;
    // Smallest singular value of the leading-j sub-block is the cosine of
    // the largest principal angle at candidate rank j.
    for (Index j = 1; j <= r; ++j) {
      Eigen::JacobiSVD<Matrix> ts(t_align.leftCols(j));
      Eigen::JacobiSVD<Matrix> os(o_align.leftCols(j));
      trait_angles(m, j - 1) = acos_deg_clamped(ts.singularValues().minCoeff());
      object_angles(m, j - 1) = acos_deg_clamped(os.singularValues().minCoeff());
    }
    trait_full[static_cast<std::size_t>(m)] = t_align;
    object_full[static_cast<std::size_t>(m)] = o_align;
  });

  const Index k_bound = detail::order_stat_index(cfg.bound_quantile, m_reps);
  Vector trait_stat(r), object_stat(r);
  for (Index j = 0; j < r; ++j) {
    Vector tc = trait_angles.col(j);
    Vector oc = object_angles.col(j);
    std::nth_element(tc.data(), tc.data() + (k_bound - 1), tc.data() + m_reps);
    std::nth_element(oc.data(), oc.data() + (k_bound - 1), oc.data() + m_reps);
    trait_stat(j) = tc(k_bound - 1);
    object_stat(j) = oc(k_bound - 1);
  }

  // Longest initial run of ranks passing the xi * theta0 filter in each
  // space; the block keeps the smaller of the two.
  Index pass_trait = 0, pass_object = 0;
  for (Index j = 1; j <= r; ++j) {
    if (trait_stat(j - 1) < cfg.xi * detail::theta0_at(n, j, cfg.theta0_quantile))
      pass_trait = j;
    else
      break;
  }
  for (Index j = 1; j <= r; ++j) {
    if (object_stat(j - 1) < cfg.xi * detail::theta0_at(d, j, cfg.theta0_quantile))
      pass_object = j;
    else
      break;
  }
  const Index r_check = std::min(pass_trait, pass_object);

  BootstrapResult out;
  out.trait_angles = std::move(trait_angles);
  out.object_angles = std::move(object_angles);
  out.bounds.filtered_rank = r_check;
  out.bounds.replications = cfg.replications;
  out.bounds.quantile = cfg.bound_quantile;
  if (r_check == 0) return out;  // nothing survives: block is signal-free downstream

  out.bounds.phi_hat = trait_stat(r_check - 1);
  out.bounds.psi_hat = object_stat(r_check - 1);
  out.bounds.theta0_trait = detail::theta0_at(n, r_check, cfg.theta0_quantile);
  out.bounds.theta0_object = detail::theta0_at(d, r_check, cfg.theta0_quantile);
  out.u_check = est.u_hat.leftCols(r_check);
  out.v_check = est.v_hat.leftCols(r_check);

  out.cache.trait_aligns.reserve(static_cast<std::size_t>(m_reps));
  out.cache.object_aligns.reserve(static_cast<std::size_t>(m_reps));
  for (Index m = 0; m < m_reps; ++m) {
    out.cache.trait_aligns.push_back(trait_full[static_cast<std::size_t>(m)].topLeftCorner(r_check, r_check));
    out.cache.object_aligns.push_back(object_full[static_cast<std::size_t>(m)].topLeftCorner(r_check, r_check));
  }
  return out;
}

}  // namespace divas
