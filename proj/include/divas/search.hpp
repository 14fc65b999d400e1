#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "divas/angles.hpp"
#include "divas/block.hpp"
#include "divas/bootstrap.hpp"
#include "divas/collection.hpp"
#include "divas/core.hpp"
#include "divas/shrinkage.hpp"
#include "divas/subproblem.hpp"
#include "divas/svd.hpp"

namespace divas {

struct CcpConfig {
  double tau0 = 100.0;
  double mu = 1.05;
  double tau_max = 1e5;
  int max_iter = 40;
  double eps_slack = 1e-8;   // early stop once all angle slacks are this small
  double eps_angle = 0.05;   // degrees of tolerance in the acceptance test
  double solver_tol = 1e-6;

  void validate() const {
    require(tau0 > 0.0 && tau_max >= tau0 && mu >= 1.0, "CcpConfig: bad penalty schedule");
    require(max_iter >= 1, "CcpConfig: need at least one iteration");
    require(eps_slack >= 0.0 && eps_angle >= 0.0, "CcpConfig: negative tolerance");
  }
};

/// Everything the search needs about one block, prepared once per run.
/// Object-space data is held spectrally normalized and factored: the n x n
/// Gram of X / nu1 plus the filtered-basis projection rows, so nothing of
/// size d x d is ever formed.
struct SearchBlock {
  std::string name;
  Index traits = 0;
  Index objects = 0;
  double nu1 = 0.0;  // leading raw singular value
  PerturbationBounds bounds;
  BootstrapCache cache;
  Matrix u_check;  // d x r_check
  Matrix v_check;  // n x r_check
  std::shared_ptr<const Matrix> object_gram;  // (X/nu1)' (X/nu1)
  Matrix object_proj;                         // u_check' (X/nu1)

  bool signal_free() const { return bounds.filtered_rank == 0; }
  double cos2_phi() const {
    const double c = std::cos(rad_from_deg(bounds.phi_hat));
    return std::max(c * c, 1e-12);
  }
  double cos2_psi() const {
    const double c = std::cos(rad_from_deg(bounds.psi_hat));
    return std::max(c * c, 1e-12);
  }
};

inline SearchBlock make_search_block(const DataBlock& block, const SignalEstimate& est,
                                     BootstrapResult boot) {
  SearchBlock sb;
  sb.name = block.name;
  sb.traits = block.traits();
  sb.objects = block.objects();
  sb.nu1 = est.raw_singulars.size() > 0 ? est.raw_singulars(0) : 0.0;
  sb.bounds = boot.bounds;
  sb.cache = std::move(boot.cache);
  sb.u_check = std::move(boot.u_check);
  sb.v_check = std::move(boot.v_check);
  if (!sb.signal_free()) {
    const Matrix normalized = block.values / sb.nu1;
    sb.object_gram = std::make_shared<Matrix>(normalized.transpose() * normalized);
    sb.object_proj = sb.u_check.transpose() * normalized;
  }
  return sb;
}

/// A signal-free placeholder so a block with no surviving rank still
/// participates in bookkeeping (it is skipped as included and excluded).
inline SearchBlock make_signal_free_block(const DataBlock& block) {
  SearchBlock sb;
  sb.name = block.name;
  sb.traits = block.traits();
  sb.objects = block.objects();
  return sb;
}

struct DirectionIterationRow {
  int iteration = 0;
  std::vector<double> trait_angles;  // degrees, one per block (signal-free: 90)
  double max_angle_slack = 0.0;
  bool solver_certified = true;
};

struct DirectionTrace {
  int direction_index = 1;  // within the collection
  std::vector<DirectionIterationRow> rows;
  bool accepted = false;
  bool early_stopped = false;
  std::string rejection_reason;  // empty when accepted
  Vector candidate;              // final unit vector
};

/// One collection's located shared structure: an orthonormal trait basis plus
/// the per-direction iteration traces that produced (and finally rejected)
/// candidates.
struct JointStructure {
  BlockCollection collection;
  Matrix scores_basis;  // n x r, orthonormal
  std::vector<DirectionTrace> traces;

  Index rank() const { return scores_basis.cols(); }
};

/// Leading unit eigenvector (index-th, 1-based) of the summed trait
/// projectors of the given bases, projected into the null space of ortho and
/// renormalized. Falls through to later eigenvectors when the projection
/// annihilates one; nullopt when every candidate dies.
inline std::optional<Vector> flag_mean_init(const std::vector<const Matrix*>& bases, Index index,
                                            const Matrix& ortho) {
  require(!bases.empty(), "flag_mean_init: no bases");
  require(index >= 1, "flag_mean_init: index is 1-based");
  Index total_rows = 0;
  const Index n = bases.front()->rows();
  for (const Matrix* b : bases) {
    require(b->rows() == n, "flag_mean_init: dimension mismatch");
    total_rows += b->cols();
  }
  if (total_rows == 0) return std::nullopt;
  Matrix stack(total_rows, n);
  Index at = 0;
  for (const Matrix* b : bases) {
    stack.middleRows(at, b->cols()) = b->transpose();
    at += b->cols();
  }
  const ThinSvd svd = thin_svd(stack);  // right singular vectors = flag means
  for (Index i = index - 1; i < svd.v.cols(); ++i) {
    if (svd.singulars(i) <= 1e-12) break;
    Vector w = svd.v.col(i);
    if (ortho.size() > 0) w -= ortho * (ortho.transpose() * w);
    const double norm = w.norm();
    if (norm < 1e-8) continue;
    w /= norm;
    Index peak;
    w.cwiseAbs().maxCoeff(&peak);
    if (w(peak) < 0.0) w = -w;
    return w;
  }
  return std::nullopt;
}

namespace detail {

inline Matrix concat_columns(const std::vector<const Matrix*>& parts, Index rows) {
  Index cols = 0;
  for (const Matrix* p : parts) cols += p->cols();
  Matrix out(rows, cols);
  Index at = 0;
  for (const Matrix* p : parts) {
    out.middleCols(at, p->cols()) = *p;
    at += p->cols();
  }
  return out;
}

// Projects the columns of basis into the null space of ortho, re-orthonormalizes,
// and drops directions that lost almost all of their length.
inline Matrix shrink_basis(const Matrix& basis, const Matrix& ortho, double drop_tol = 1e-6) {
  if (basis.cols() == 0) return basis;
  Matrix w = basis;
  if (ortho.size() > 0) w -= ortho * (ortho.transpose() * w);
  Eigen::ColPivHouseholderQR<Matrix> qr(w);
  Index keep = 0;
  for (Index i = 0; i < std::min(w.rows(), w.cols()); ++i)
    if (std::abs(qr.matrixR()(i, i)) > drop_tol) ++keep;
  return Matrix(qr.householderQ() * Matrix::Identity(w.rows(), keep));
}

inline double object_angle(const SearchBlock& sb, const Vector& v) {
  const double energy = v.dot(*sb.object_gram * v);
  if (energy <= 0.0) return 90.0;
  const double proj = (sb.object_proj * v).norm();
  return acos_deg_clamped(proj / std::sqrt(energy));
}

}  // namespace detail

/// Runs the penalized convex-concave search for one collection: directions
/// are extracted one at a time, each validated against the raw angle bounds
/// before being kept, and the collection's search ends at the first rejected
/// candidate (or when initialization runs out of directions).
inline JointStructure find_joint_directions(const BlockCollection& collection,
                                            const std::vector<SearchBlock>& blocks,
                                            const CollectionMap<JointStructure>& found,
                                            const CcpConfig& cfg) {
  cfg.validate();
  const int k_total = static_cast<int>(blocks.size());
  const Index n = blocks.front().objects;

  JointStructure out;
  out.collection = collection;
  out.scores_basis = Matrix(n, 0);

  Index max_rank = std::numeric_limits<Index>::max();
  for (int k : collection.indices) {
    const SearchBlock& sb = blocks[static_cast<std::size_t>(k - 1)];
    require(!sb.signal_free(), "find_joint_directions: included block has no signal");
    max_rank = std::min(max_rank, sb.bounds.filtered_rank);
  }

  for (Index direction = 1; direction <= max_rank; ++direction) {
    // Orthogonality set: structure of every superset collection found so
    // far plus this collection's accepted directions.
    std::vector<const Matrix*> ortho_parts;
    for (const auto& [c, s] : found)
      if (c.is_strict_superset_of(collection) && s.rank() > 0) ortho_parts.push_back(&s.scores_basis);
    if (out.scores_basis.cols() > 0) ortho_parts.push_back(&out.scores_basis);
    const Matrix ortho = orthonormalize(detail::concat_columns(ortho_parts, n), 1e-10);

    // Shrink the included bases into the remaining search space.
    std::vector<Matrix> shrunk;
    std::vector<const Matrix*> shrunk_ptrs;
    bool exhausted = false;
    for (int k : collection.indices) {
      const SearchBlock& sb = blocks[static_cast<std::size_t>(k - 1)];
      Matrix s = detail::shrink_basis(sb.v_check, ortho);
      if (s.cols() == 0) exhausted = true;
      shrunk.push_back(std::move(s));
    }
    if (exhausted) break;
    for (const Matrix& s : shrunk) shrunk_ptrs.push_back(&s);

    const std::optional<Vector> init = flag_mean_init(shrunk_ptrs, 1, ortho);
    if (!init) break;

    DirectionTrace trace;
    trace.direction_index = static_cast<int>(direction);

    SubproblemSpec spec;
    spec.n = n;
    spec.total_blocks = k_total;
    spec.v0 = *init;
    spec.tau = cfg.tau0;
    spec.ortho = ortho;
    {
      std::size_t at = 0;
      for (int k : collection.indices) {
        const SearchBlock& sb = blocks[static_cast<std::size_t>(k - 1)];
        SubproblemSpec::IncludedBlock inc;
        inc.block = k;
        inc.trait_basis = shrunk[at++];
        inc.cos2_phi = sb.cos2_phi();
        inc.object_gram = sb.object_gram;
        inc.object_proj = sb.object_proj;
        inc.cos2_psi = sb.cos2_psi();
        spec.included.push_back(std::move(inc));
      }
      for (int k = 1; k <= k_total; ++k) {
        if (collection.contains(k)) continue;
        const SearchBlock& sb = blocks[static_cast<std::size_t>(k - 1)];
        if (sb.signal_free()) continue;  // no bound exists to exclude against
        SubproblemSpec::ExcludedBlock exc;
        exc.block = k;
        exc.trait_basis = sb.v_check;
        exc.cos2_phi = sb.cos2_phi();
        spec.excluded.push_back(std::move(exc));
      }
    }

    Vector v = spec.v0;
    Vector v_prev = spec.v0;
    for (int it = 0; it < cfg.max_iter; ++it) {
      SolveOptions opts;
      opts.tol = cfg.solver_tol;
      const SubproblemResult res = solve_subproblem(spec, opts);
      v = res.v;

      DirectionIterationRow row;
      row.iteration = it + 1;
      row.solver_certified = res.certified;
      const double vnorm = v.norm();
      for (int k = 1; k <= k_total; ++k) {
        const SearchBlock& sb = blocks[static_cast<std::size_t>(k - 1)];
        if (sb.signal_free() || vnorm == 0.0) {
          row.trait_angles.push_back(90.0);
        } else {
          row.trait_angles.push_back(
              vector_subspace_angle(v, SubspaceBasis{sb.v_check, SpaceTag::trait}));
        }
      }
      double angle_slack = 0.0;
      for (Index t = 0; t < 2 * k_total; ++t) angle_slack = std::max(angle_slack, res.slacks(t));
      row.max_angle_slack = angle_slack;
      trace.rows.push_back(std::move(row));

      if (angle_slack <= cfg.eps_slack) {
        trace.early_stopped = true;
        break;
      }
      // numerically stationary relinearization point: further iterations
      // reproduce the same iterate, so this equals running to the cap
      if (it > 2 && (v - v_prev).cwiseAbs().maxCoeff() <= 1e-10) break;
      v_prev = v;
      spec.v0 = vnorm > 1.0 ? Vector(v / vnorm) : v;
      spec.tau = std::min(spec.tau * cfg.mu, cfg.tau_max);
    }

    // Post-hoc acceptance from raw matrices, independent of solver slacks.
    const double vnorm = v.norm();
    if (vnorm <= 1e-12) {
      trace.rejection_reason = "solver returned a vanishing direction";
      out.traces.push_back(std::move(trace));
      break;
    }
    Vector unit = v / vnorm;
    trace.candidate = unit;

    std::string reason;
    for (int k : collection.indices) {
      const SearchBlock& sb = blocks[static_cast<std::size_t>(k - 1)];
      const double a = vector_subspace_angle(unit, SubspaceBasis{sb.v_check, SpaceTag::trait});
      if (a > sb.bounds.phi_hat + cfg.eps_angle) {
        reason = "trait angle to included block " + sb.name + " above its bound";
        break;
      }
      const double oa = detail::object_angle(sb, unit);
      if (oa > sb.bounds.psi_hat + cfg.eps_angle) {
        reason = "object angle to included block " + sb.name + " above its bound";
        break;
      }
    }
    if (reason.empty()) {
      for (int k = 1; k <= k_total && reason.empty(); ++k) {
        if (collection.contains(k)) continue;
        const SearchBlock& sb = blocks[static_cast<std::size_t>(k - 1)];
        if (sb.signal_free()) continue;
        const double a = vector_subspace_angle(unit, SubspaceBasis{sb.v_check, SpaceTag::trait});
        if (!(a > sb.bounds.phi_hat - cfg.eps_angle))
          reason = "not separated from excluded block " + sb.name;
      }
    }
    if (reason.empty() && ortho.size() > 0 && (ortho.transpose() * unit).norm() > 1e-7)
      reason = "lost orthogonality to previously found structure";

    if (!reason.empty()) {
      trace.rejection_reason = std::move(reason);
      out.traces.push_back(std::move(trace));
      break;
    }

    // Accept: enforce exact orthogonality against everything stored, then append.
    if (ortho.size() > 0) unit -= ortho * (ortho.transpose() * unit);
    unit /= unit.norm();
    trace.accepted = true;
    trace.candidate = unit;
    out.traces.push_back(std::move(trace));
    Matrix wider(n, out.scores_basis.cols() + 1);
    wider << out.scores_basis, unit;
    out.scores_basis = std::move(wider);
  }
  return out;
}

struct SearchResult {
  CollectionMap<JointStructure> structures;        // nonempty collections only
  CollectionMap<std::vector<DirectionTrace>> traces;  // every visited collection
};

/// Visits every block collection in search order, skipping collections that
/// include a signal-free block, and accumulates the found structure (later,
/// smaller collections must stay orthogonal to it).
inline SearchResult run_full_search(const std::vector<SearchBlock>& blocks, const CcpConfig& cfg) {
  require(!blocks.empty(), "run_full_search: no blocks");
  SearchResult out;
  for (const BlockCollection& c : all_collections(static_cast<int>(blocks.size()))) {
    bool skip = false;
    for (int k : c.indices)
      if (blocks[static_cast<std::size_t>(k - 1)].signal_free()) skip = true;
    if (skip) continue;
    JointStructure s = find_joint_directions(c, blocks, out.structures, cfg);
    out.traces[c] = s.traces;
    if (s.rank() > 0) out.structures[c] = std::move(s);
  }
  return out;
}

}  // namespace divas
