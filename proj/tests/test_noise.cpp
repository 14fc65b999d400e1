#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "divas/noise.hpp"
#include "divas/shrinkage.hpp"
#include "divas/svd.hpp"

using namespace divas;

namespace {

// Planted low-rank-plus-noise block with a known singular value ladder.
struct Planted {
  DataBlock block;
  SignalEstimate est;
};

Planted make_planted(Index d, Index n, Index rank, double top, double entry_sd, std::uint64_t seed) {
  Rng rng(seed);
  const Matrix u = orthonormalize(rng.gaussian_matrix(d, rank));
  const Matrix v = orthonormalize(rng.gaussian_matrix(n, rank));
  Vector ladder(rank);
  for (Index i = 0; i < rank; ++i)
    ladder(i) = top * static_cast<double>(rank - i) / static_cast<double>(rank);
  Matrix x = u * ladder.asDiagonal() * v.transpose();
  x.noalias() += entry_sd * rng.gaussian_matrix(d, n);
  Planted p;
  p.block = make_block(std::move(x), "planted");
  p.est = extract_signal(p.block);
  return p;
}

}  // namespace

TEST_CASE("imputation leaves a signal-free block untouched") {
  Rng rng(1);
  DataBlock b = make_block(rng.gaussian_matrix(60, 80), "noise");
  const SignalEstimate est = extract_signal(b);
  REQUIRE(est.r_hat == 0);
  Rng draw(2);
  const ImputedNoise imp = impute_noise(b, est, draw);
  CHECK(imp.imputed_count == 0);
  CHECK((imp.values - b.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("imputed directions land inside the bulk") {
  const Planted p = make_planted(150, 100, 4, 80.0, 1.0, 7);
  REQUIRE(p.est.r_hat >= 1);
  Rng draw(3);
  const ImputedNoise imp = impute_noise(p.block, p.est, draw);
  const double scale = p.est.sigma_hat * std::sqrt(150.0);
  const double lo = scale * (1.0 - std::sqrt(p.est.aspect_beta));
  const double hi = scale * (1.0 + std::sqrt(p.est.aspect_beta));
  REQUIRE(static_cast<Index>(imp.draws.size()) == p.est.r_hat);
  for (double nu : imp.draws) {
    CHECK(nu >= lo);
    CHECK(nu <= hi);
  }
  // deterministic under a fixed stream
  Rng draw2(3);
  const ImputedNoise imp2 = impute_noise(p.block, p.est, draw2);
  CHECK((imp.values - imp2.values).cwiseAbs().maxCoeff() == 0.0);

  // the imputed estimator shares singular vectors with the data: swapping
  // values back restores the block
  Matrix restored = imp.values;
  for (Index i = 0; i < p.est.r_hat; ++i)
    restored.noalias() += (p.est.raw_singulars(i) - imp.draws[static_cast<std::size_t>(i)]) *
                          p.est.u_hat.col(i) * p.est.v_hat.col(i).transpose();
  CHECK((restored - p.block.values).cwiseAbs().maxCoeff() <= 1e-9 * p.block.values.cwiseAbs().maxCoeff());
}

TEST_CASE("stratified impute draws stay deterministic and in bulk") {
  const Planted p = make_planted(80, 60, 3, 50.0, 1.0, 11);
  REQUIRE(p.est.r_hat >= 1);
  Rng a(5), b(5);
  const ImputedNoise i1 = impute_noise(p.block, p.est, a, true);
  const ImputedNoise i2 = impute_noise(p.block, p.est, b, true);
  CHECK((i1.values - i2.values).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("envelope covers the theoretical curve on interior ranks") {
  int covered = 0, total = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const QQEnvelope env = qq_envelope(0.5, 60, 1.0, 40, rng);
    for (Index i = 3; i < 57; ++i) {  // interior ranks
      ++total;
      if (env.theoretical(i) >= env.env_min(i) && env.theoretical(i) <= env.env_max(i)) ++covered;
    }
  }
  CHECK(static_cast<double>(covered) >= 0.95 * static_cast<double>(total));
}

TEST_CASE("envelope tightens as the matrix grows") {
  Rng a(9), b(9);
  const QQEnvelope small_env = qq_envelope(0.25, 125, 1.0, 30, a);   // 125 x 500
  const QQEnvelope large_env = qq_envelope(0.25, 500, 1.0, 30, b);   // 500 x 2000
  const auto mean_width = [](const QQEnvelope& e) {
    return (e.env_max - e.env_min).sum() / static_cast<double>(e.env_max.size());
  };
  CHECK(mean_width(large_env) < mean_width(small_env));
}

TEST_CASE("imputation repairs the energy deficit of the naive residual", "[slow]") {
  // Downscaled version of the 5000 x 500 acceptance construction: a rank-20
  // ladder on a 1000 x 200 block with per-column unit noise energy.
  const Index d = 1000, n = 200, rank = 20;
  const double entry_sd = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(42);
  const Matrix u = orthonormalize(rng.gaussian_matrix(d, rank));
  const Matrix v = orthonormalize(rng.gaussian_matrix(n, rank));
  Vector ladder(rank);
  for (Index i = 0; i < rank; ++i)
    ladder(i) = 0.1 + (2.0 - 0.1) * static_cast<double>(rank - 1 - i) / static_cast<double>(rank - 1);
  Matrix x = u * ladder.asDiagonal() * v.transpose();
  x.noalias() += entry_sd * rng.gaussian_matrix(d, n);
  DataBlock block = make_block(std::move(x), "ladder");

  const SignalEstimate est = extract_signal(block);
  REQUIRE(est.r_hat >= 5);
  REQUIRE(est.r_hat < n);

  Rng draw(43);
  const ImputedNoise imp = impute_noise(block, est, draw);
  Rng env_rng(44);
  const QQEnvelope env = qq_envelope(est.aspect_beta, n, 1.0, 100, env_rng);

  // the naive residual's leading directions are energy deficient: its
  // smallest eigenvalues sit below the envelope
  const Matrix naive = block.values - est.reconstruct();
  const Vector naive_eigs = observed_qq_eigenvalues(naive, entry_sd);
  int below = 0;
  for (Index i = 0; i < est.r_hat; ++i)
    if (naive_eigs(i) < env.env_min(i)) ++below;
  CHECK(below >= est.r_hat - 2);

  // the imputed estimator follows the bulk law at distributional level
  // (KS distance), while the naive residual does not
  const MPLaw law{est.aspect_beta, 1.0};
  const auto ks_distance = [&](const Vector& eigs) {
    double ks = 0.0;
    for (Index i = 0; i < eigs.size(); ++i) {
      const double f = mp_cdf(law, eigs(i));
      ks = std::max(ks, std::abs(f - (static_cast<double>(i) + 1.0) / static_cast<double>(n)));
      ks = std::max(ks, std::abs(f - static_cast<double>(i) / static_cast<double>(n)));
    }
    return ks;
  };
  const Vector imputed_eigs = observed_qq_eigenvalues(imp.values, entry_sd);
  const double deficit_floor = 0.8 * static_cast<double>(est.r_hat) / static_cast<double>(n);
  CHECK(ks_distance(imputed_eigs) <= 0.05);
  CHECK(ks_distance(naive_eigs) >= deficit_floor);  // every deficient rank displaces the CDF
  CHECK(ks_distance(naive_eigs) > ks_distance(imputed_eigs));

  // and it is far more often inside the envelope than the naive residual
  const auto inside_count = [&](const Vector& eigs) {
    int inside = 0;
    for (Index i = 0; i < n; ++i)
      if (eigs(i) >= env.env_min(i) && eigs(i) <= env.env_max(i)) ++inside;
    return inside;
  };
  CHECK(inside_count(imputed_eigs) >= 3 * inside_count(naive_eigs));
}
