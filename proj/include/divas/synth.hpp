#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "divas/angles.hpp"
#include "divas/block.hpp"
#include "divas/collection.hpp"
#include "divas/core.hpp"
#include "divas/svd.hpp"

namespace divas {

enum class LoadingPattern { pinstripe, random_dense };

/// Recipe for a multi-block data set with fully known structure: per-block
/// trait counts, the rank of every shared collection, the mutual principal
/// angle between non-nested sibling trait subspaces, and the noise level
/// (per-entry standard deviation).
struct SynthSpec {
  Index objects = 400;
  std::vector<Index> trait_dims;
  CollectionMap<Index> collection_ranks;
  std::optional<double> pairwise_trait_angle = 60.0;  // nullopt: independent random siblings
  double noise_scale = 1.0;
  std::uint64_t seed = 0;
  LoadingPattern loading_pattern = LoadingPattern::pinstripe;
  // Loading column norm in units of the per-block detection edge
  // sigma * sqrt(d OR n) * (1 + sqrt(beta)).
  double signal_strength = 4.0;

  int block_count() const { return static_cast<int>(trait_dims.size()); }

  static SynthSpec three_block_preset(bool desk_scale, std::uint64_t seed) {
    SynthSpec s;
    s.objects = 400;
    s.trait_dims = desk_scale ? std::vector<Index>{200, 400, 2000} : std::vector<Index>{200, 400, 10000};
    s.collection_ranks[BlockCollection::of({1, 2, 3})] = 1;
    s.collection_ranks[BlockCollection::of({1, 2})] = 1;
    s.collection_ranks[BlockCollection::of({1, 3})] = 1;
    s.collection_ranks[BlockCollection::of({2, 3})] = 1;
    s.pairwise_trait_angle = 60.0;
    s.noise_scale = 1.0;
    s.seed = seed;
    s.loading_pattern = LoadingPattern::pinstripe;
    return s;
  }
};

/// Generated blocks plus the ground truth that produced them.
struct SynthData {
  SynthSpec spec;
  std::vector<DataBlock> blocks;
  CollectionMap<Matrix> scores;                   // V_i, n x r_i, orthonormal
  CollectionMap<std::map<int, Matrix>> loadings;  // i -> block -> d_k x r_i

  Matrix component(const BlockCollection& c, int block) const {
    return loadings.at(c).at(block) * scores.at(c).transpose();
  }
  /// Orthonormal basis of the true signal trait space of one block.
  Matrix true_trait_space(int block) const {
    Matrix concat(spec.objects, 0);
    for (const auto& [c, v] : scores)
      if (c.contains(block)) {
        Matrix wider(spec.objects, concat.cols() + v.cols());
        wider << concat, v;
        concat = std::move(wider);
      }
    return orthonormalize(concat);
  }
  /// Orthonormal basis of the true signal object space of one block.
  Matrix true_object_space(int block) const {
    const Index d = spec.trait_dims[static_cast<std::size_t>(block - 1)];
    Matrix concat(d, 0);
    for (const auto& [c, ls] : loadings)
      if (c.contains(block)) {
        const Matrix& l = ls.at(block);
        Matrix wider(d, concat.cols() + l.cols());
        wider << concat, l;
        concat = std::move(wider);
      }
    return orthonormalize(concat);
  }
};

namespace detail {

// Equal-magnitude sign vectors at exact mutual angles, built by flipping
// controlled index sets: a top vector, one vector at 90 degrees to it, and up
// to two more at the requested angle to each other and 90 degrees to the top.
// Feasible when all region counts come out integral.
struct SignPathPlan {
  Index flips = 0;  // f = n (1 - cos alpha) / 2
  bool feasible = false;
};

inline SignPathPlan sign_path_plan(Index n, double angle_deg, std::size_t cohort) {
  SignPathPlan plan;
  const double c = std::cos(rad_from_deg(angle_deg));
  const double f_exact = 0.5 * static_cast<double>(n) * (1.0 - c);
  const auto f = static_cast<Index>(std::llround(f_exact));
  if (std::abs(f_exact - static_cast<double>(f)) > 1e-9) return plan;
  if (n % 2 != 0 || f % 4 != 0) return plan;
  if (cohort > 3 || cohort < 2) return plan;
  // region capacities for the third vector
  if (n / 2 - f / 2 < f / 4 || f / 2 < f / 4) return plan;
  plan.flips = f;
  plan.feasible = true;
  return plan;
}

inline double sign_of(bool positive) { return positive ? 1.0 : -1.0; }

// k distinct indices sampled without replacement from pool, deterministic in
// the stream; pool is consumed in place.
inline std::vector<Index> draw_without_replacement(std::vector<Index>& pool, Index k, Rng& rng) {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    const auto at = static_cast<std::size_t>(rng.uniform() * static_cast<double>(pool.size()));
    const std::size_t j = std::min(at, pool.size() - 1);
    out.push_back(pool[j]);
    pool[j] = pool.back();
    pool.pop_back();
  }
  return out;
}

}  // namespace detail

/// Builds the blocks and ground truth for a SynthSpec. Regeneration with an
/// equal seed is bit-identical. Trait bases honor the nesting orthogonality
/// rules exactly, and when a sibling angle is requested it is achieved to
/// machine precision (verified before returning). Throws on infeasible
/// rank/angle combinations.
inline SynthData generate(const SynthSpec& spec) {
  const int k_total = spec.block_count();
  require(k_total >= 1, "generate: need at least one block");
  require(spec.objects >= 4, "generate: need at least 4 objects");
  require(!spec.collection_ranks.empty(), "generate: no collections requested");
  require(spec.noise_scale >= 0.0, "generate: negative noise scale");
  for (const auto& [c, r] : spec.collection_ranks) {
    require(r >= 1, "generate: collection ranks must be positive");
    require(c.indices.back() <= k_total, "generate: collection index out of range");
  }
  Index total_rank = 0;
  for (const auto& [c, r] : spec.collection_ranks) total_rank += r;
  require(total_rank <= spec.objects, "generate: total rank exceeds object count");
  for (int k = 1; k <= k_total; ++k) {
    Index block_rank = 0;
    for (const auto& [c, r] : spec.collection_ranks)
      if (c.contains(k)) block_rank += r;
    require(block_rank <= std::min(spec.trait_dims[static_cast<std::size_t>(k - 1)], spec.objects),
            "generate: block rank exceeds its dimensions");
  }

  SynthData out;
  out.spec = spec;
  Rng rng(spec.seed);
  Rng score_rng = rng.child(1);
  Rng loading_rng = rng.child(2);
  Rng noise_rng = rng.child(3);

  // Non-nested collections form the sibling cohort that carries the
  // requested mutual angle.
  std::vector<BlockCollection> order;
  for (const auto& [c, r] : spec.collection_ranks) order.push_back(c);
  std::vector<char> in_cohort(order.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = 0; j < order.size(); ++j) {
      if (i == j) continue;
      if (!order[i].is_superset_of(order[j]) && !order[j].is_superset_of(order[i])) in_cohort[i] = 1;
    }
  std::vector<BlockCollection> cohort;
  for (std::size_t i = 0; i < order.size(); ++i)
    if (in_cohort[i]) cohort.push_back(order[i]);

  const bool couple_angles = spec.pairwise_trait_angle.has_value() && cohort.size() >= 2;
  if (couple_angles) {
    Index r0 = spec.collection_ranks.at(cohort.front());
    for (const auto& c : cohort)
      require(spec.collection_ranks.at(c) == r0,
              "generate: angle-coupled sibling collections must share one rank");
    const double ang = *spec.pairwise_trait_angle;
    require(ang > 0.0 && ang <= 90.0, "generate: sibling angle must be in (0, 90]");
    const double cang = std::cos(rad_from_deg(ang));
    require(cang > -1.0 / (static_cast<double>(cohort.size()) - 1.0),
            "generate: sibling angle/rank combination is not positive definite");
  }

  // Sign-vector path: equal-magnitude score entries with exact angles, for
  // the one-top-collection, rank-1 cohort shape.
  bool sign_path = false;
  if (couple_angles && cohort.size() >= 2 && cohort.size() <= 3) {
    bool shape_ok = spec.collection_ranks.at(cohort.front()) == 1;
    std::size_t tops = 0;
    for (const auto& [c, r] : spec.collection_ranks) {
      bool is_cohort = std::find(cohort.begin(), cohort.end(), c) != cohort.end();
      if (is_cohort) continue;
      ++tops;
      if (r != 1 || tops > 1) shape_ok = false;
      for (const auto& m : cohort)
        if (!c.is_strict_superset_of(m)) shape_ok = false;
    }
    if (shape_ok &&
        detail::sign_path_plan(spec.objects, *spec.pairwise_trait_angle, cohort.size()).feasible)
      sign_path = true;
  }

  const Index n = spec.objects;
  if (sign_path) {
    const auto plan = detail::sign_path_plan(n, *spec.pairwise_trait_angle, cohort.size());
    const double mag = 1.0 / std::sqrt(static_cast<double>(n));
    Vector top(n);
    for (Index i = 0; i < n; ++i) top(i) = detail::sign_of(score_rng.uniform() < 0.5) * mag;

    std::vector<Index> everything(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) everything[static_cast<std::size_t>(i)] = i;
    auto pool = everything;
    const std::vector<Index> f1 = detail::draw_without_replacement(pool, n / 2, score_rng);

    Vector v1 = top;
    for (Index i : f1) v1(i) = -v1(i);

    const Index f = plan.flips;
    std::vector<char> in_f1(static_cast<std::size_t>(n), 0), in_f2(static_cast<std::size_t>(n), 0);
    for (Index i : f1) in_f1[static_cast<std::size_t>(i)] = 1;

    auto pick_from = [&](bool want_f1, bool want_f2, Index count, Rng& r) {
      std::vector<Index> candidates;
      for (Index i = 0; i < n; ++i)
        if (in_f1[static_cast<std::size_t>(i)] == want_f1 && in_f2[static_cast<std::size_t>(i)] == want_f2)
          candidates.push_back(i);
      require(static_cast<Index>(candidates.size()) >= count, "generate: sign path region exhausted");
      return detail::draw_without_replacement(candidates, count, r);
    };

    Vector v2 = v1;
    {
      // half the flips inside f1, half outside: keeps v2 orthogonal to top
      const auto a = pick_from(true, false, f / 2, score_rng);
      const auto b = pick_from(false, false, f / 2, score_rng);
      for (Index i : a) { v2(i) = -v2(i); in_f2[static_cast<std::size_t>(i)] = 1; }
      for (Index i : b) { v2(i) = -v2(i); in_f2[static_cast<std::size_t>(i)] = 1; }
    }

    std::vector<Vector> cohort_scores{v1, v2};
    if (cohort.size() == 3) {
      Vector v3 = v1;
      const auto r11 = pick_from(true, true, f / 4, score_rng);
      const auto r10 = pick_from(true, false, f / 4, score_rng);
      const auto r01 = pick_from(false, true, f / 4, score_rng);
      const auto r00 = pick_from(false, false, f / 4, score_rng);
      for (const auto& region : {r11, r10, r01, r00})
        for (Index i : region) v3(i) = -v3(i);
      cohort_scores.push_back(std::move(v3));
    }

    for (const auto& [c, r] : spec.collection_ranks) {
      const bool is_cohort = std::find(cohort.begin(), cohort.end(), c) != cohort.end();
      if (!is_cohort) out.scores[c] = top;
    }
    for (std::size_t j = 0; j < cohort.size(); ++j) out.scores[cohort[j]] = cohort_scores[j];
  } else {
    // General path: random orthonormal bases, projected for nesting
    // orthogonality; cohort subspaces combined from fresh frames through the
    // Cholesky factor of the target cosine Gram matrix.
    std::sort(order.begin(), order.end(), SearchOrder{});
    Matrix used(n, 0);  // every basis built so far (cohort frames must avoid them all)
    auto append_used = [&](const Matrix& b) {
      Matrix wider(n, used.cols() + b.cols());
      wider << used, b;
      used = orthonormalize(wider);
    };

    for (const auto& c : order) {
      const bool is_cohort =
          couple_angles && std::find(cohort.begin(), cohort.end(), c) != cohort.end();
      if (is_cohort) continue;
      const Index r = spec.collection_ranks.at(c);
      Matrix supersets(n, 0);
      for (const auto& [cc, b] : out.scores)
        if (cc.is_strict_superset_of(c)) {
          Matrix wider(n, supersets.cols() + b.cols());
          wider << supersets, b;
          supersets = std::move(wider);
        }
      Matrix g = score_rng.gaussian_matrix(n, r);
      if (supersets.cols() > 0) g -= supersets * (supersets.transpose() * g);
      Matrix basis = orthonormalize(g);
      require(basis.cols() == r, "generate: not enough room for collection basis");
      out.scores[c] = basis;
      append_used(basis);
    }
    if (!couple_angles) {
      for (const auto& c : cohort) {
        const Index r = spec.collection_ranks.at(c);
        Matrix supersets(n, 0);
        for (const auto& [cc, b] : out.scores)
          if (cc.is_strict_superset_of(c)) {
            Matrix wider(n, supersets.cols() + b.cols());
            wider << supersets, b;
            supersets = std::move(wider);
          }
        Matrix g = score_rng.gaussian_matrix(n, r);
        if (supersets.cols() > 0) g -= supersets * (supersets.transpose() * g);
        Matrix basis = orthonormalize(g);
        require(basis.cols() == r, "generate: not enough room for collection basis");
        out.scores[c] = basis;
      }
    } else {
      const auto m = cohort.size();
      const Index r = spec.collection_ranks.at(cohort.front());
      const double cang = std::cos(rad_from_deg(*spec.pairwise_trait_angle));
      Matrix gram = Matrix::Constant(static_cast<Index>(m), static_cast<Index>(m), cang);
      gram.diagonal().setOnes();
      const Matrix chol = Eigen::LLT<Matrix>(gram).matrixL();
      std::vector<Matrix> bases(m, Matrix(n, r));
      for (Index slot = 0; slot < r; ++slot) {
        Matrix g = score_rng.gaussian_matrix(n, static_cast<Index>(m));
        if (used.cols() > 0) g -= used * (used.transpose() * g);
        const Matrix frame = orthonormalize(g);
        require(frame.cols() == static_cast<Index>(m), "generate: not enough room for cohort frame");
        const Matrix combined = frame * chol.transpose();
        for (std::size_t j = 0; j < m; ++j) bases[j].col(slot) = combined.col(static_cast<Index>(j));
        append_used(frame);
      }
      for (std::size_t j = 0; j < m; ++j) out.scores[cohort[j]] = bases[j];
    }
  }

  // Construction self-checks: nesting orthogonality and achieved angles.
  for (const auto& [a, va] : out.scores)
    for (const auto& [b, vb] : out.scores) {
      if (a == b) continue;
      if (a.is_strict_superset_of(b) || b.is_strict_superset_of(a))
        require(max_alignment_cosine(va, vb) <= 1e-10, "generate: nesting orthogonality violated");
    }
  if (couple_angles) {
    for (std::size_t i = 0; i < cohort.size(); ++i)
      for (std::size_t j = i + 1; j < cohort.size(); ++j) {
        const auto angles = principal_angles(SubspaceBasis{out.scores.at(cohort[i]), SpaceTag::trait},
                                             SubspaceBasis{out.scores.at(cohort[j]), SpaceTag::trait});
        for (double a : angles)
          require(std::abs(a - *spec.pairwise_trait_angle) <= 1e-6,
                  "generate: sibling angle missed the target");
      }
  }

  // Loadings. Pinstripe: the all-block component occupies the first half of
  // the rows; remaining components get disjoint bands in the second half.
  const double sigma_ref = spec.noise_scale > 0.0 ? spec.noise_scale : 1.0;
  for (int k = 1; k <= k_total; ++k) {
    const Index d = spec.trait_dims[static_cast<std::size_t>(k - 1)];
    const double beta =
        static_cast<double>(std::min(d, n)) / static_cast<double>(std::max(d, n));
    const double edge =
        sigma_ref * std::sqrt(static_cast<double>(std::max(d, n))) * (1.0 + std::sqrt(beta));
    const double norm_target = spec.signal_strength * edge;

    std::vector<BlockCollection> mine;
    for (const auto& [c, r] : spec.collection_ranks)
      if (c.contains(k)) mine.push_back(c);
    std::sort(mine.begin(), mine.end(), SearchOrder{});

    std::size_t band_slot = 0;
    std::size_t band_total = 0;
    for (const auto& c : mine)
      if (c.size() != static_cast<std::size_t>(k_total))
        band_total += static_cast<std::size_t>(spec.collection_ranks.at(c));

    for (const auto& c : mine) {
      const Index r = spec.collection_ranks.at(c);
      Matrix l(d, r);
      if (spec.loading_pattern == LoadingPattern::random_dense) {
        l = loading_rng.gaussian_matrix(d, r);
        for (Index j = 0; j < r; ++j) l.col(j) *= norm_target / l.col(j).norm();
      } else {
        l.setZero();
        for (Index j = 0; j < r; ++j) {
          Index lo, hi;
          if (c.size() == static_cast<std::size_t>(k_total)) {
            // full collection: half the traits active, split across rank slots
            lo = (d / 2) * j / std::max<Index>(r, 1);
            hi = (d / 2) * (j + 1) / std::max<Index>(r, 1);
          } else {
            const Index start = d / 2;
            const auto width = static_cast<Index>((d - start) / static_cast<Index>(std::max<std::size_t>(band_total, 1)));
            lo = start + static_cast<Index>(band_slot) * width;
            hi = lo + width;
            ++band_slot;
          }
          require(hi > lo, "generate: pinstripe band collapsed; too many components");
          const Index len = hi - lo;
          const double mag = norm_target / std::sqrt(static_cast<double>(len));
          const Index stripe = std::max<Index>(1, len / 8);
          for (Index i = lo; i < hi; ++i)
            l(i, j) = (((i - lo) / stripe) % 2 == 0 ? mag : -mag);
        }
      }
      out.loadings[c][k] = std::move(l);
    }

    // Assumption check: concatenated loadings must have full column rank.
    Matrix concat(d, 0);
    for (const auto& c : mine) {
      const Matrix& l = out.loadings.at(c).at(k);
      Matrix wider(d, concat.cols() + l.cols());
      wider << concat, l;
      concat = std::move(wider);
    }
    if (concat.cols() > 0)
      require(orthonormalize(concat, 1e-10).cols() == concat.cols(),
              "generate: block loadings are rank deficient");
  }

  // Assemble blocks.
  out.blocks.reserve(static_cast<std::size_t>(k_total));
  for (int k = 1; k <= k_total; ++k) {
    const Index d = spec.trait_dims[static_cast<std::size_t>(k - 1)];
    Matrix x = Matrix::Zero(d, n);
    for (const auto& [c, ls] : out.loadings)
      if (c.contains(k)) x.noalias() += ls.at(k) * out.scores.at(c).transpose();
    if (spec.noise_scale > 0.0) x.noalias() += spec.noise_scale * noise_rng.gaussian_matrix(d, n);
    out.blocks.push_back(make_block(std::move(x), "X" + std::to_string(k)));
  }
  return out;
}

}  // namespace divas
