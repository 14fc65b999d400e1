#pragma once

#include <utility>
#include <vector>

#include "divas/block.hpp"
#include "divas/collection.hpp"
#include "divas/core.hpp"
#include "divas/search.hpp"
#include "divas/svd.hpp"

namespace divas {

struct LoadingsFit {
  Matrix concatenated;  // d x R, ordered like the score concatenation
  bool rank_deficient = false;
};

/// Minimum-norm least-squares loadings for one block against a concatenated
/// scores matrix (n x R). Unique whenever the concatenation has full column
/// rank; otherwise the minimum-norm solution is returned and flagged, which
/// happens when more directions were selected than the block's own rank
/// supports.
inline LoadingsFit fit_loadings(const Matrix& data, const Matrix& concat_scores,
                                double rank_tol = 1e-10) {
  require(concat_scores.cols() > 0, "fit_loadings: empty score concatenation");
  require(data.cols() == concat_scores.rows(), "fit_loadings: object count mismatch");
  const ThinSvd svd = thin_svd(concat_scores);
  const double cutoff = rank_tol * std::max(1.0, svd.singulars(0));
  LoadingsFit fit;
  Index rank = 0;
  while (rank < svd.singulars.size() && svd.singulars(rank) > cutoff) ++rank;
  fit.rank_deficient = rank < concat_scores.cols();
  // L = X * Q * S^+ * W' with concat = Q S W'
  Matrix xq = data * svd.u.leftCols(rank);
  for (Index i = 0; i < rank; ++i) xq.col(i) /= svd.singulars(i);
  fit.concatenated = xq * svd.v.leftCols(rank).transpose();
  return fit;
}

/// Right singular vectors of the stacked included data restricted to the
/// shared score span. The stacked matrix is touched only through its product
/// with the n x r basis, so the expensive dimension never enters an SVD.
/// Columns are sign-fixed (largest entry positive) and ordered by decreasing
/// explained energy.
inline Matrix informative_rotation(const std::vector<const Matrix*>& included_data,
                                   const Matrix& scores) {
  require(!included_data.empty(), "informative_rotation: no data blocks");
  const Index r = scores.cols();
  if (r == 0) return Matrix(0, 0);
  Index total = 0;
  for (const Matrix* x : included_data) {
    require(x->cols() == scores.rows(), "informative_rotation: object count mismatch");
    total += x->rows();
  }
  Matrix projected(total, r);
  Index at = 0;
  for (const Matrix* x : included_data) {
    projected.middleRows(at, x->rows()).noalias() = (*x) * scores;
    at += x->rows();
  }
  Eigen::JacobiSVD<Matrix> svd(projected, Eigen::ComputeThinV);
  Matrix q = svd.matrixV();
  for (Index j = 0; j < q.cols(); ++j) {
    Index peak;
    q.col(j).cwiseAbs().maxCoeff(&peak);
    if (q(peak, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

/// Per-block split of the fitted loadings, with rotated modes of variation
/// and the leftover residual.
struct BlockDecomposition {
  int block = 0;  // 1-based
  std::vector<BlockCollection> collections;  // containing this block, search order
  CollectionMap<Matrix> loadings;            // d x r_i per collection (unrotated)
  Matrix residual;                           // data minus all components
  bool rank_deficient = false;

  Matrix component(const BlockCollection& c, const CollectionMap<JointStructure>& structures) const {
    return loadings.at(c) * structures.at(c).scores_basis.transpose();
  }
};

struct Reconstruction {
  CollectionMap<Matrix> rotations;        // Q per collection
  CollectionMap<Matrix> rotated_scores;   // scores * Q
  std::vector<BlockDecomposition> blocks;

  Matrix rotated_loadings(const BlockCollection& c, int block) const {
    return blocks[static_cast<std::size_t>(block - 1)].loadings.at(c) * rotations.at(c);
  }
};

inline Reconstruction reconstruct_blocks(const std::vector<DataBlock>& data,
                                         const CollectionMap<JointStructure>& structures) {
  Reconstruction out;
  const int k_total = static_cast<int>(data.size());

  for (const auto& [c, s] : structures) {
    std::vector<const Matrix*> included;
    for (int k : c.indices) included.push_back(&data[static_cast<std::size_t>(k - 1)].values);
    Matrix q = informative_rotation(included, s.scores_basis);
    out.rotated_scores[c] = s.scores_basis * q;
    out.rotations[c] = std::move(q);
  }

  for (int k = 1; k <= k_total; ++k) {
    BlockDecomposition dec;
    dec.block = k;
    for (const auto& [c, s] : structures)
      if (c.contains(k)) dec.collections.push_back(c);

    const Matrix& x = data[static_cast<std::size_t>(k - 1)].values;
    if (dec.collections.empty()) {
      dec.residual = x;
      out.blocks.push_back(std::move(dec));
      continue;
    }

    Index total_rank = 0;
    for (const auto& c : dec.collections) total_rank += structures.at(c).rank();
    Matrix concat(x.cols(), total_rank);
    Index at = 0;
    for (const auto& c : dec.collections) {
      const Matrix& basis = structures.at(c).scores_basis;
      concat.middleCols(at, basis.cols()) = basis;
      at += basis.cols();
    }

    const LoadingsFit fit = fit_loadings(x, concat);
    dec.rank_deficient = fit.rank_deficient;
    at = 0;
    Matrix reconstructed = Matrix::Zero(x.rows(), x.cols());
    for (const auto& c : dec.collections) {
      const Index r = structures.at(c).rank();
      dec.loadings[c] = fit.concatenated.middleCols(at, r);
      reconstructed.noalias() += dec.loadings[c] * structures.at(c).scores_basis.transpose();
      at += r;
    }
    dec.residual = x - reconstructed;
    out.blocks.push_back(std::move(dec));
  }
  return out;
}

}  // namespace divas
