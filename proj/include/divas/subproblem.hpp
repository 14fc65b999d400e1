#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "divas/core.hpp"

namespace divas {

/// One convexified direction-search instance: a linear surrogate objective
/// over the trait space plus hinge-penalized convex quadratic constraints,
/// restricted to the orthogonal complement of already-found structure.
///
/// Object-space data enters spectrally normalized (divided by the block's
/// leading singular value), so each object constraint and its slack live on
/// the same scale as the trait constraints and the penalty contribution does
/// not grow with the raw energy of a block.
struct SubproblemSpec {
  Index n = 0;             // trait-space dimension
  Index total_blocks = 0;  // K, fixes the slack layout
  Vector v0;               // linearization point, |v0| <= 1 + 1e-6
  double tau = 100.0;      // penalty weight
  Matrix ortho;            // n x q orthonormal basis to stay orthogonal to (may be empty)

  struct IncludedBlock {
    int block = 0;       // 1-based block id
    Matrix trait_basis;  // search-shrunk signal basis, n x r
    double cos2_phi = 1.0;
    std::shared_ptr<const Matrix> object_gram;  // normalized Gram X~' X~, n x n
    Matrix object_proj;                         // U_check' X~, r x n
    double cos2_psi = 1.0;
  };
  struct ExcludedBlock {
    int block = 0;
    Matrix trait_basis;  // full filtered signal basis, n x r
    double cos2_phi = 1.0;
  };
  std::vector<IncludedBlock> included;
  std::vector<ExcludedBlock> excluded;

  Index slack_count() const { return 2 * total_blocks + 2; }

  void validate() const {
    require(n >= 2, "SubproblemSpec: dimension too small");
    require(total_blocks >= 1, "SubproblemSpec: need at least one block");
    require(v0.size() == n, "SubproblemSpec: v0 dimension mismatch");
    require(v0.norm() <= 1.0 + 1e-6, "SubproblemSpec: v0 must have norm at most 1");
    require(tau > 0.0, "SubproblemSpec: tau must be positive");
    require(!included.empty(), "SubproblemSpec: need at least one included block");
    for (const auto& b : included) {
      require(b.cos2_phi > 0.0 && b.cos2_phi <= 1.0, "SubproblemSpec: cos2_phi out of (0, 1]");
      require(b.cos2_psi > 0.0 && b.cos2_psi <= 1.0, "SubproblemSpec: cos2_psi out of (0, 1]");
      require(b.trait_basis.rows() == n, "SubproblemSpec: trait basis dimension mismatch");
      if (b.object_gram) {
        require(b.object_gram->rows() == n && b.object_gram->cols() == n,
                "SubproblemSpec: object gram must be n x n");
        require(b.object_proj.cols() == n, "SubproblemSpec: object projection dimension mismatch");
      }
    }
    for (const auto& b : excluded) {
      require(b.cos2_phi > 0.0 && b.cos2_phi <= 1.0, "SubproblemSpec: cos2_phi out of (0, 1]");
      require(b.trait_basis.rows() == n, "SubproblemSpec: trait basis dimension mismatch");
    }
    if (ortho.size() > 0) {
      require(ortho.rows() == n, "SubproblemSpec: ortho dimension mismatch");
      const Matrix g = ortho.transpose() * ortho;
      require((g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff() <= 1e-8,
              "SubproblemSpec: ortho basis must be orthonormal");
    }
  }
};

struct SubproblemResult {
  Vector v;
  Vector slacks;     // 2K + 2 canonical layout: trait per block, object per block, norm lower, norm upper
  double objective = 0.0;
  bool certified = false;
  double certificate_residual = 0.0;  // projected subgradient norm at v
  int newton_iterations = 0;
};

namespace detail {

// g(v) = quad(v) + lin . v + offset with quad one of: absent, |v|^2 * scale,
// scale * |factor v|^2, or scale * v' gram v.
struct CompiledConstraint {
  enum class Kind { none, identity, factor, gram } kind = Kind::none;
  double scale = 1.0;
  Matrix factor;
  std::shared_ptr<const Matrix> gram;
  Vector lin;
  double offset = 0.0;
  Index slack_slot = 0;

  double quad_value(const Vector& v) const {
    switch (kind) {
      case Kind::none: return 0.0;
      case Kind::identity: return scale * v.squaredNorm();
      case Kind::factor: return scale * (factor * v).squaredNorm();
      case Kind::gram: return scale * v.dot(*gram * v);
    }
    return 0.0;
  }
  double value(const Vector& v) const { return quad_value(v) + lin.dot(v) + offset; }

  // gradient = 2 A v + lin
  Vector gradient(const Vector& v) const {
    switch (kind) {
      case Kind::none: return lin;
      case Kind::identity: return (2.0 * scale) * v + lin;
      case Kind::factor: return (2.0 * scale) * (factor.transpose() * (factor * v)) + lin;
      case Kind::gram: return (2.0 * scale) * (*gram * v) + lin;
    }
    return lin;
  }

  // hess += weight * 2 A
  void add_hessian(double weight, Matrix& hess) const {
    switch (kind) {
      case Kind::none: return;
      case Kind::identity:
        hess.diagonal().array() += 2.0 * weight * scale;
        return;
      case Kind::factor:
        hess.noalias() += (2.0 * weight * scale) * (factor.transpose() * factor);
        return;
      case Kind::gram:
        hess.noalias() += (2.0 * weight * scale) * (*gram);
        return;
    }
  }
};

struct CompiledProblem {
  Vector lin_obj;          // objective linear coefficient
  double const_obj = 0.0;  // objective constant
  std::vector<CompiledConstraint> constraints;
  Matrix ortho;
  double tau = 0.0;
  Index slack_count = 0;
};

inline CompiledProblem compile(const SubproblemSpec& spec) {
  CompiledProblem p;
  p.tau = spec.tau;
  p.ortho = spec.ortho;
  p.slack_count = spec.slack_count();
  const Index n = spec.n;
  const Index k_total = spec.total_blocks;

  p.lin_obj = Vector::Zero(n);
  p.const_obj = 0.0;
  for (const auto& b : spec.included) {
    const Vector proj = b.trait_basis * (b.trait_basis.transpose() * spec.v0);
    p.lin_obj.noalias() -= 2.0 * proj;
    p.const_obj += spec.v0.dot(proj);
  }

  for (const auto& b : spec.included) {
    // |v|^2 - 2 v0' P v / cos2 + v0' P v0 / cos2 <= slack
    CompiledConstraint c;
    c.kind = CompiledConstraint::Kind::identity;
    c.scale = 1.0;
    const Vector pv0 = b.trait_basis * (b.trait_basis.transpose() * spec.v0);
    c.lin = (-2.0 / b.cos2_phi) * pv0;
    c.offset = spec.v0.dot(pv0) / b.cos2_phi;
    c.slack_slot = b.block - 1;
    p.constraints.push_back(std::move(c));

    if (b.object_gram) {
      // v' G v - 2 v0' C'C v / cos2 + v0' C'C v0 / cos2 <= slack
      CompiledConstraint oc;
      oc.kind = CompiledConstraint::Kind::gram;
      oc.scale = 1.0;
      oc.gram = b.object_gram;
      const Vector cv0 = b.object_proj.transpose() * (b.object_proj * spec.v0);
      oc.lin = (-2.0 / b.cos2_psi) * cv0;
      oc.offset = spec.v0.dot(cv0) / b.cos2_psi;
      oc.slack_slot = k_total + b.block - 1;
      p.constraints.push_back(std::move(oc));
    }
  }
  for (const auto& b : spec.excluded) {
    // v' P v / cos2 - 2 v0' v + |v0|^2 <= slack
    CompiledConstraint c;
    c.kind = CompiledConstraint::Kind::factor;
    c.scale = 1.0 / b.cos2_phi;
    c.factor = b.trait_basis.transpose();
    c.lin = -2.0 * spec.v0;
    c.offset = spec.v0.squaredNorm();
    c.slack_slot = b.block - 1;
    p.constraints.push_back(std::move(c));
  }
  {
    // 1 - 2 v0' v + |v0|^2 <= slack  (linearized lower norm bound)
    CompiledConstraint c;
    c.kind = CompiledConstraint::Kind::none;
    c.lin = -2.0 * spec.v0;
    c.offset = 1.0 + spec.v0.squaredNorm();
    c.slack_slot = 2 * k_total;
    p.constraints.push_back(std::move(c));
  }
  {
    // |v|^2 - 1 <= slack (quadratic upper norm bound; keeps the Hessian
    // positive definite everywhere)
    CompiledConstraint c;
    c.kind = CompiledConstraint::Kind::identity;
    c.scale = 1.0;
    c.lin = Vector::Zero(n);
    c.offset = -1.0;
    c.slack_slot = 2 * k_total + 1;
    p.constraints.push_back(std::move(c));
  }
  return p;
}

// Exact inner minimization of the epigraph barrier over one slack:
//   min_s  w s - log(s - g) - log s,   w = t_barrier * tau,
// has the closed form s = ((a + 2) + sqrt(a^2 + 4)) / (2 w) with a = w g.
// Conjugate forms avoid cancellation for large |a|. Returns s and s - g.
struct SlackEval {
  double s = 0.0;
  double s_minus_g = 0.0;
};

inline SlackEval barrier_slack(double w, double g) {
  const double a = w * g;
  const double root = std::sqrt(a * a + 4.0);
  SlackEval out;
  const double num_s = a >= 0.0 ? (a + 2.0) + root : -4.0 * a / (root - (a + 2.0));
  const double num_d = a <= 2.0 ? (2.0 - a) + root : 4.0 * a / (root + (a - 2.0));
  out.s = num_s / (2.0 * w);
  out.s_minus_g = num_d / (2.0 * w);
  return out;
}

// phi(g) = min_s [w s - log(s - g) - log s]; derivatives via the envelope:
// phi' = 1 / (s - g) in (0, w), phi'' = 1 / (s^2 + (s - g)^2).
struct BarrierTerm {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

inline BarrierTerm barrier_term(double w, double g) {
  const SlackEval se = barrier_slack(w, g);
  BarrierTerm out;
  out.value = w * se.s - std::log(se.s_minus_g) - std::log(se.s);
  out.d1 = 1.0 / se.s_minus_g;
  out.d2 = 1.0 / (se.s * se.s + se.s_minus_g * se.s_minus_g);
  return out;
}

inline Vector project_out(const Matrix& ortho, const Vector& v) {
  if (ortho.size() == 0) return v;
  return v - ortho * (ortho.transpose() * v);
}

}  // namespace detail

struct SolveOptions {
  double tol = 1e-6;
  int max_newton = 400;
};

/// Minimizes
///   -2 v0' P_sum v + v0' P_sum v0 + tau * sum_t max(0, g_t(v))
/// over { v : ortho' v = 0 } by path-following on the epigraph barrier with
/// the slack block eliminated in closed form, leaving smooth unconstrained
/// Newton steps in v (plus the linear orthogonality equalities).
///
/// The returned slacks are the positive parts of the constraint values at
/// the solution (the exact-penalty identity), and `certified` reports
/// whether a subgradient of the reduced objective, projected onto the
/// orthogonality null space, has norm at most tol * (1 + tau). Constraints
/// with |g_t| within the kink width may take any hinge coefficient in
/// [0, 1]; the reported residual minimizes over those coefficients.
inline SubproblemResult solve_subproblem(const SubproblemSpec& spec, const SolveOptions& opts = {}) {
  spec.validate();
  const detail::CompiledProblem p = detail::compile(spec);
  const Index n = spec.n;
  const auto m = static_cast<Index>(p.constraints.size());

  Vector v = detail::project_out(p.ortho, spec.v0);
  int newton_used = 0;

  const double t_final = std::clamp(100.0 / (opts.tol * std::max(p.tau, 1.0)), 1e7, 1e9);
  std::vector<double> gvals(static_cast<std::size_t>(m));
  Matrix hess(n, n);

  const auto barrier_value = [&](const Vector& x, double t_barrier) {
    double val = t_barrier * p.lin_obj.dot(x);
    for (const auto& c : p.constraints)
      val += detail::barrier_term(t_barrier * p.tau, c.value(x)).value;
    return val;
  };

  for (double t_barrier = 1.0; ; t_barrier = std::min(t_barrier * 25.0, t_final)) {
    for (int it = 0; it < opts.max_newton; ++it) {
      Vector grad = t_barrier * p.lin_obj;
      hess.setZero();
      for (Index ci = 0; ci < m; ++ci) {
        const auto& c = p.constraints[static_cast<std::size_t>(ci)];
        const double g = c.value(v);
        gvals[static_cast<std::size_t>(ci)] = g;
        const detail::BarrierTerm bt = detail::barrier_term(t_barrier * p.tau, g);
        const Vector cg = c.gradient(v);
        grad.noalias() += bt.d1 * cg;
        hess.noalias() += bt.d2 * (cg * cg.transpose());
        c.add_hessian(bt.d1, hess);
      }

      // Newton step restricted to ortho' v = 0 through the KKT Schur system.
      Eigen::LDLT<Matrix> ldlt(hess);
      Vector dv;
      if (p.ortho.size() == 0) {
        dv = ldlt.solve(-grad);
      } else {
        const Matrix hi_e = ldlt.solve(p.ortho);
        const Vector hi_g = ldlt.solve(grad);
        const Matrix schur = p.ortho.transpose() * hi_e;
        const Vector lambda = schur.ldlt().solve(-p.ortho.transpose() * hi_g);
        dv = -(hi_g + hi_e * lambda);
      }
      ++newton_used;

      const double decrement2 = -grad.dot(dv);
      if (decrement2 <= 2e-14 * t_barrier * (1.0 + p.tau)) break;

      const double base = barrier_value(v, t_barrier);
      double step = 1.0;
      Vector trial = v + dv;
      for (int ls = 0; ls < 60; ++ls) {
        if (barrier_value(trial, t_barrier) <= base - 0.25 * step * decrement2) break;
        step *= 0.5;
        trial = v + step * dv;
      }
      v = trial;
      if (step * std::sqrt(std::max(decrement2, 0.0)) < 1e-14) break;
    }
    if (t_barrier >= t_final) break;
  }

  // Assemble the exact-penalty answer and its optimality certificate.
  SubproblemResult out;
  out.v = v;
  out.newton_iterations = newton_used;
  out.slacks = Vector::Zero(p.slack_count);
  out.objective = p.lin_obj.dot(v) + p.const_obj;
  std::vector<Vector> kink_grads;
  Vector residual = p.lin_obj;
  const double kink_width = std::max(opts.tol, 100.0 / (t_final * p.tau));
  for (Index ci = 0; ci < m; ++ci) {
    const auto& c = p.constraints[static_cast<std::size_t>(ci)];
    const double g = c.value(v);
    const double hinge = std::max(0.0, g);
    out.slacks(c.slack_slot) += hinge;
    out.objective += p.tau * hinge;
    if (g > kink_width)
      residual.noalias() += p.tau * c.gradient(v);
    else if (g >= -kink_width)
      kink_grads.push_back(p.tau * c.gradient(v));
  }

  // Minimal-norm subgradient over the free hinge coefficients at the kinks
  // (cyclic exact coordinate minimization on the [0, 1] box).
  std::vector<Vector> proj_kinks;
  proj_kinks.reserve(kink_grads.size());
  for (const auto& kg : kink_grads) proj_kinks.push_back(detail::project_out(p.ortho, kg));
  Vector r = detail::project_out(p.ortho, residual);
  std::vector<double> alpha(proj_kinks.size(), 0.0);
  Vector acc = r;
  for (int sweep = 0; sweep < 200 && !proj_kinks.empty(); ++sweep) {
    double moved = 0.0;
    for (std::size_t j = 0; j < proj_kinks.size(); ++j) {
      const double denom = proj_kinks[j].squaredNorm();
      if (denom <= 0.0) continue;
      const double cur = alpha[j];
      double best = cur - acc.dot(proj_kinks[j]) / denom;
      best = std::clamp(best, 0.0, 1.0);
      if (best != cur) {
        acc.noalias() += (best - cur) * proj_kinks[j];
        moved += std::abs(best - cur);
        alpha[j] = best;
      }
    }
    if (moved < 1e-15) break;
  }
  out.certificate_residual = acc.norm();
  out.certified = out.certificate_residual <= opts.tol * (1.0 + p.tau);
  return out;
}

}  // namespace divas
