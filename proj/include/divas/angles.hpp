#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <vector>

#include "divas/core.hpp"
#include "divas/svd.hpp"

namespace divas {

enum class SpaceTag { trait, object };

/// Orthonormal basis for a subspace of trait space (R^n) or of one block's
/// object space (R^d).
struct SubspaceBasis {
  Matrix matrix;  // ambient_dim x rank, orthonormal columns
  SpaceTag space_tag = SpaceTag::trait;

  Index ambient_dim() const { return matrix.rows(); }
  Index rank() const { return matrix.cols(); }

  void validate() const {
    require(matrix.cols() <= matrix.rows(), "SubspaceBasis: rank exceeds ambient dimension");
    if (matrix.cols() == 0) return;
    const Matrix g = matrix.transpose() * matrix;
    require((g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() <= 1e-10,
            "SubspaceBasis: columns are not orthonormal");
  }
};

/// Canonical angles between two subspaces, in degrees, ascending (descending
/// cosine), from the SVD of the basis cross product. With extend = true the
/// list is padded with 90-degree angles up to the larger rank, which is the
/// convention for subspaces of unequal dimension.
inline std::vector<double> principal_angles(const SubspaceBasis& a, const SubspaceBasis& b,
                                            bool extend = false) {
  require(a.ambient_dim() == b.ambient_dim(), "principal_angles: ambient dimensions differ");
  const Index p = std::min(a.rank(), b.rank());
  const Index q = std::max(a.rank(), b.rank());
  std::vector<double> angles;
  if (p > 0) {
    Eigen::JacobiSVD<Matrix> svd(a.matrix.transpose() * b.matrix);
    angles.reserve(static_cast<std::size_t>(extend ? q : p));
    for (Index i = 0; i < p; ++i) angles.push_back(acos_deg_clamped(svd.singularValues()(i)));
  }
  if (extend)
    for (Index i = p; i < q; ++i) angles.push_back(90.0);
  return angles;
}

inline double max_principal_angle(const SubspaceBasis& a, const SubspaceBasis& b) {
  const auto angles = principal_angles(a, b);
  return angles.empty() ? 90.0 : angles.back();
}

/// Angle between a vector and a subspace: arccos(|B^T v| / |v|) in [0, 90].
inline double vector_subspace_angle(const Vector& v, const SubspaceBasis& basis) {
  require(v.size() == basis.ambient_dim(), "vector_subspace_angle: dimension mismatch");
  const double nv = v.norm();
  require(nv > 0.0, "vector_subspace_angle: zero vector");
  if (basis.rank() == 0) return 90.0;
  return acos_deg_clamped((basis.matrix.transpose() * v).norm() / nv);
}

/// Replicate alignment matrices recorded during the rotational bootstrap,
/// restricted to the filtered rank. Row index runs over the replicate truth
/// basis, column index over the replicate estimate basis. Immutable once the
/// bootstrap completes.
struct BootstrapCache {
  std::vector<Matrix> trait_aligns;   // M matrices, r_check x r_check
  std::vector<Matrix> object_aligns;  // M matrices, r_check x r_check
};

struct Theta2Star {
  double degrees = 90.0;
  bool orthogonal_to_estimate = false;  // projection of v onto the estimate vanished
};

/// Percentile of the projection-path angle for one candidate direction: per
/// replicate, the angle picked up when the projection of v onto the estimated
/// basis is mapped through that replicate's truth-estimate alignment.
inline Theta2Star theta2_star_percentile(const Vector& v, const SubspaceBasis& estimated_basis,
                                         const std::vector<Matrix>& aligns, double q = 0.95) {
  require(!aligns.empty(), "theta2_star_percentile: empty replicate cache");
  require(q > 0.0 && q < 1.0, "theta2_star_percentile: q must be in (0, 1)");
  const Vector c = estimated_basis.matrix.transpose() * v;
  const double cn = c.norm();
  Theta2Star out;
  if (cn <= 1e-12 * std::max(1.0, v.norm())) {
    out.degrees = 90.0;
    out.orthogonal_to_estimate = true;
    return out;
  }
  std::vector<double> samples;
  samples.reserve(aligns.size());
  for (const Matrix& m : aligns) {
    require(m.rows() == c.size() && m.cols() == c.size(),
            "theta2_star_percentile: cache rank mismatch");
    samples.push_back(acos_deg_clamped((m * c).norm() / cn));
  }
  std::sort(samples.begin(), samples.end());
  const auto m_count = static_cast<double>(samples.size());
  auto k = static_cast<std::size_t>(std::ceil(q * m_count));
  k = std::min(std::max<std::size_t>(k, 1), samples.size());
  out.degrees = samples[k - 1];
  return out;
}

}  // namespace divas
