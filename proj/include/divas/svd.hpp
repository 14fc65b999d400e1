#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>

#include "divas/core.hpp"

namespace divas {

struct ThinSvd {
  Matrix u;         // d x m, orthonormal columns
  Vector singulars; // m, descending, nonnegative
  Matrix v;         // n x m, orthonormal columns
};

namespace detail {

// Sign convention: in each left singular vector the entry of largest
// magnitude is positive; ties resolved by lowest index. Keeps decompositions
// bit-stable across runs.
inline void fix_svd_signs(Matrix& u, Matrix& v) {
  for (Index j = 0; j < u.cols(); ++j) {
    Index at = 0;
    double best = -1.0;
    for (Index i = 0; i < u.rows(); ++i) {
      const double a = std::abs(u(i, j));
      if (a > best) {
        best = a;
        at = i;
      }
    }
    if (u(at, j) < 0.0) {
      u.col(j) = -u.col(j);
      if (j < v.cols()) v.col(j) = -v.col(j);
    }
  }
}

}  // namespace detail

/// Full thin SVD with the deterministic sign convention.
inline ThinSvd thin_svd(const Matrix& m) {
  require(m.allFinite(), "thin_svd: input must be finite");
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  ThinSvd out;
  out.u = svd.matrixU();
  out.singulars = svd.singularValues();
  out.v = svd.matrixV();
  detail::fix_svd_signs(out.u, out.v);
  return out;
}

/// Leading r singular triplets plus the full singular spectrum, computed from
/// the eigendecomposition of the Gram matrix on the smaller side. Much faster
/// than a full SVD when only a low-dimensional leading subspace is needed,
/// e.g. inside bootstrap replications.
inline ThinSvd leading_svd(const Matrix& m, Index r) {
  require(m.allFinite(), "leading_svd: input must be finite");
  const Index d = m.rows(), n = m.cols();
  const Index small_dim = std::min(d, n);
  require(r >= 0 && r <= small_dim, "leading_svd: rank out of range");

  const bool rows_small = d <= n;
  Matrix gram;
  if (rows_small)
    gram.noalias() = m * m.transpose();
  else
    gram.noalias() = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);

  ThinSvd out;
  out.singulars.resize(small_dim);
  for (Index i = 0; i < small_dim; ++i) {
    const double ev = eig.eigenvalues()(small_dim - 1 - i);  // descending
    out.singulars(i) = ev > 0.0 ? std::sqrt(ev) : 0.0;
  }
  out.u.resize(d, r);
  out.v.resize(n, r);
  for (Index j = 0; j < r; ++j) {
    const Vector w = eig.eigenvectors().col(small_dim - 1 - j);
    const double s = out.singulars(j);
    if (rows_small) {
      out.u.col(j) = w;
      if (s > 0.0)
        out.v.col(j).noalias() = m.transpose() * w / s;
      else
        out.v.col(j).setZero();
    } else {
      out.v.col(j) = w;
      if (s > 0.0)
        out.u.col(j).noalias() = m * w / s;
      else
        out.u.col(j).setZero();
    }
  }
  detail::fix_svd_signs(out.u, out.v);
  return out;
}

/// All singular values (descending) via the small-side Gram spectrum.
inline Vector singular_values(const Matrix& m) { return leading_svd(m, 0).singulars; }

/// Orthonormal basis of the column span, rank revealed at the given relative
/// tolerance.
inline Matrix orthonormalize(const Matrix& m, double rel_tol = 1e-12) {
  if (m.cols() == 0) return Matrix(m.rows(), 0);
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  const Index full = std::min(m.rows(), m.cols());
  const double scale = std::abs(qr.matrixR()(0, 0));
  Index rank = 0;
  for (Index i = 0; i < full; ++i)
    if (std::abs(qr.matrixR()(i, i)) > rel_tol * scale) ++rank;
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), rank);
  return q;
}

/// Max |cos| alignment between column spans; 0 for an empty basis.
inline double max_alignment_cosine(const Matrix& a, const Matrix& b) {
  if (a.cols() == 0 || b.cols() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a.transpose() * b);
  return svd.singularValues()(0);
}

}  // namespace divas
