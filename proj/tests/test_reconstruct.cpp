#include <catch2/catch_amalgamated.hpp>

#include "divas/reconstruct.hpp"
#include "divas/synth.hpp"

using namespace divas;

TEST_CASE("least squares loadings") {
  Rng rng(5);
  const Index d = 30, n = 40;

  SECTION("orthonormal scores reduce to a projection") {
    const Matrix v = orthonormalize(rng.gaussian_matrix(n, 3));
    const Matrix x = rng.gaussian_matrix(d, n);
    const LoadingsFit fit = fit_loadings(x, v);
    CHECK_FALSE(fit.rank_deficient);
    CHECK((fit.concatenated - x * v).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SECTION("a consistent system is recovered exactly") {
    const Matrix v = orthonormalize(rng.gaussian_matrix(n, 4));
    const Matrix l = rng.gaussian_matrix(d, 4);
    const LoadingsFit fit = fit_loadings(l * v.transpose(), v);
    CHECK((fit.concatenated - l).cwiseAbs().maxCoeff() <= 1e-9);
  }
  SECTION("rank-deficient concatenations are flagged, minimum norm returned") {
    Matrix v(n, 3);
    v.col(0) = orthonormalize(rng.gaussian_matrix(n, 1));
    v.col(1) = orthonormalize(rng.gaussian_matrix(n, 1));
    v.col(2) = v.col(0);  // duplicate direction
    const Matrix x = rng.gaussian_matrix(d, n);
    const LoadingsFit fit = fit_loadings(x, v);
    CHECK(fit.rank_deficient);
    // fitted values still reproduce the projection onto the span
    const Matrix span = orthonormalize(v);
    const Matrix projected = x * span * span.transpose();
    CHECK((fit.concatenated * v.transpose() - projected).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("informative rotation") {
  Rng rng(9);
  const Index n = 30;

  SECTION("rank one is the identity") {
    const Matrix v = orthonormalize(rng.gaussian_matrix(n, 1));
    const Matrix x = rng.gaussian_matrix(20, n);
    const Matrix q = informative_rotation({&x}, v);
    REQUIRE(q.rows() == 1);
    CHECK_THAT(q(0, 0), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  SECTION("already-diagonal energy gives the identity up to order") {
    const Matrix v = orthonormalize(rng.gaussian_matrix(n, 2));
    Matrix l = Matrix::Zero(20, 2);
    l(0, 0) = 5.0;
    l(1, 1) = 2.0;
    const Matrix x = l * v.transpose();
    const Matrix q = informative_rotation({&x}, v);
    CHECK(((q.cwiseAbs() - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff()) <= 1e-10);
  }
  SECTION("modes come out in decreasing energy order") {
    SynthSpec spec = SynthSpec::three_block_preset(true, 4);
    spec.trait_dims = {48, 64, 80};
    spec.objects = 64;
    const SynthData data = generate(spec);
    // rotate a rank-2 concatenated structure: use the two pair collections
    const Matrix v12 = data.scores.at(BlockCollection::of({1, 2}));
    const Matrix v13 = data.scores.at(BlockCollection::of({1, 3}));
    Matrix v(spec.objects, 2);
    v << v12, v13;
    const Matrix v_orth = orthonormalize(v);
    std::vector<const Matrix*> xs{&data.blocks[0].values};
    const Matrix q = informative_rotation(xs, v_orth);
    const Matrix rotated = v_orth * q;
    const double e0 = (data.blocks[0].values * rotated.col(0)).norm();
    const double e1 = (data.blocks[0].values * rotated.col(1)).norm();
    CHECK(e0 >= e1);
  }
}

TEST_CASE("reconstruction on the planted three-block preset") {
  SynthSpec spec = SynthSpec::three_block_preset(true, 21);
  spec.trait_dims = {64, 96, 160};
  spec.objects = 96;
  const SynthData data = generate(spec);

  // use the true scores as if they had been found: reconstruction quality is
  // then limited only by the regression step
  CollectionMap<JointStructure> structures;
  for (const auto& [c, v] : data.scores) {
    JointStructure s;
    s.collection = c;
    s.scores_basis = v;
    structures[c] = std::move(s);
  }

  const Reconstruction recon = reconstruct_blocks(data.blocks, structures);

  SECTION("components are close to the planted components") {
    for (const auto& [c, v] : data.scores) {
      for (int k : c.indices) {
        const Matrix truth = data.component(c, k);
        const Matrix est = recon.blocks[static_cast<std::size_t>(k - 1)].component(c, structures);
        CHECK((est - truth).norm() / truth.norm() <= 0.25);
      }
    }
  }

  SECTION("the component sum is the projection onto the concatenated span") {
    for (int k = 1; k <= 3; ++k) {
      const auto& dec = recon.blocks[static_cast<std::size_t>(k - 1)];
      Matrix concat(spec.objects, 0);
      for (const auto& c : dec.collections) {
        Matrix wider(spec.objects, concat.cols() + structures.at(c).rank());
        wider << concat, structures.at(c).scores_basis;
        concat = std::move(wider);
      }
      const Matrix span = orthonormalize(concat);
      const Matrix& x = data.blocks[static_cast<std::size_t>(k - 1)].values;
      const Matrix projected = x * span * span.transpose();
      Matrix sum = Matrix::Zero(x.rows(), x.cols());
      for (const auto& c : dec.collections) sum += dec.component(c, structures);
      CHECK((sum - projected).norm() / projected.norm() <= 1e-8);
      // residual identity
      CHECK((dec.residual - (x - sum)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }

  SECTION("components are invariant to the informative rotation") {
    for (const auto& [c, v] : data.scores) {
      for (int k : c.indices) {
        const Matrix plain = recon.blocks[static_cast<std::size_t>(k - 1)].component(c, structures);
        const Matrix rotated =
            recon.rotated_loadings(c, k) * recon.rotated_scores.at(c).transpose();
        CHECK((plain - rotated).cwiseAbs().maxCoeff() <= 1e-10 * plain.cwiseAbs().maxCoeff());
      }
    }
  }

  SECTION("residual obeys the loose triangle sanity bound") {
    for (int k = 1; k <= 3; ++k) {
      const auto& dec = recon.blocks[static_cast<std::size_t>(k - 1)];
      const Matrix& x = data.blocks[static_cast<std::size_t>(k - 1)].values;
      const SignalEstimate est = extract_signal(data.blocks[static_cast<std::size_t>(k - 1)]);
      const Matrix extracted = est.reconstruct();
      CHECK(dec.residual.norm() <= (x - extracted).norm() + extracted.norm());
    }
  }
}

TEST_CASE("blocks without any structure keep their data as residual") {
  Rng rng(2);
  std::vector<DataBlock> blocks{make_block(rng.gaussian_matrix(20, 30), "only")};
  const CollectionMap<JointStructure> structures;
  const Reconstruction recon = reconstruct_blocks(blocks, structures);
  REQUIRE(recon.blocks.size() == 1);
  CHECK(recon.blocks[0].collections.empty());
  CHECK((recon.blocks[0].residual - blocks[0].values).cwiseAbs().maxCoeff() == 0.0);
}
