#include <catch2/catch_amalgamated.hpp>

#include "divas/svd.hpp"

using namespace divas;

TEST_CASE("thin svd basics") {
  SECTION("identity") {
    const ThinSvd s = thin_svd(Matrix::Identity(3, 3));
    CHECK_THAT(s.singulars(0), Catch::Matchers::WithinAbs(1.0, 1e-14));
    CHECK_THAT(s.singulars(2), Catch::Matchers::WithinAbs(1.0, 1e-14));
  }
  SECTION("rank one outer product") {
    Vector a(4), b(3);
    a << 1, -2, 0.5, 3;
    b << 2, 1, -1;
    const ThinSvd s = thin_svd(a * b.transpose());
    CHECK_THAT(s.singulars(0), Catch::Matchers::WithinAbs(a.norm() * b.norm(), 1e-10));
    for (Index i = 1; i < s.singulars.size(); ++i)
      CHECK_THAT(s.singulars(i), Catch::Matchers::WithinAbs(0.0, 1e-10));
  }
  SECTION("reconstruction of a random matrix") {
    Rng rng(3);
    const Matrix m = rng.gaussian_matrix(50, 30);
    const ThinSvd s = thin_svd(m);
    const Matrix rec = s.u * s.singulars.asDiagonal() * s.v.transpose();
    CHECK((rec - m).norm() / m.norm() <= 1e-10);
    // descending spectrum
    for (Index i = 1; i < s.singulars.size(); ++i) CHECK(s.singulars(i) <= s.singulars(i - 1));
  }
  SECTION("sign convention is deterministic") {
    Rng rng(11);
    const Matrix m = rng.gaussian_matrix(20, 8);
    const ThinSvd s1 = thin_svd(m);
    const ThinSvd s2 = thin_svd(m);
    CHECK((s1.u - s2.u).cwiseAbs().maxCoeff() == 0.0);
    for (Index j = 0; j < s1.u.cols(); ++j) {
      Index at;
      s1.u.col(j).cwiseAbs().maxCoeff(&at);
      CHECK(s1.u(at, j) > 0.0);
    }
  }
  SECTION("non-finite input rejected") {
    Matrix bad = Matrix::Zero(3, 3);
    bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS(thin_svd(bad));
  }
}

TEST_CASE("leading svd agrees with the full decomposition") {
  Rng rng(17);
  for (auto [d, n] : {std::pair<Index, Index>{40, 25}, {25, 40}}) {
    Matrix m = rng.gaussian_matrix(d, n);
    // plant a strong leading subspace so ordering is unambiguous
    m += 50.0 * rng.gaussian_matrix(d, 3) * rng.gaussian_matrix(3, n);
    const ThinSvd full = thin_svd(m);
    const ThinSvd lead = leading_svd(m, 3);
    for (Index i = 0; i < std::min(d, n); ++i)
      CHECK_THAT(lead.singulars(i), Catch::Matchers::WithinRel(full.singulars(i), 1e-9));
    for (Index j = 0; j < 3; ++j) {
      CHECK_THAT(std::abs(lead.u.col(j).dot(full.u.col(j))), Catch::Matchers::WithinAbs(1.0, 1e-8));
      CHECK_THAT(std::abs(lead.v.col(j).dot(full.v.col(j))), Catch::Matchers::WithinAbs(1.0, 1e-8));
    }
  }
}

TEST_CASE("orthonormalize reveals rank") {
  Rng rng(29);
  const Matrix b = rng.gaussian_matrix(10, 3);
  Matrix m(10, 5);
  m << b, b.col(0) + b.col(1), 2.0 * b.col(2);
  const Matrix q = orthonormalize(m, 1e-10);
  CHECK(q.cols() == 3);
  CHECK(((q.transpose() * q) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(orthonormalize(Matrix(4, 0)).cols() == 0);
}
