#include "capcrl/ica.hpp"

#include "capcrl/error.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace capcrl;

namespace {
MatrixXd independent_sources(Index n, std::vector<SourceDistribution> dists, std::uint64_t seed) {
  MatrixXd s(n, static_cast<Index>(dists.size()));
  for (Index j = 0; j < s.cols(); ++j) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(j)}));
    for (Index i = 0; i < n; ++i) s(i, j) = draw_standardized(dists[j], rng);
  }
  return s;
}
}  // namespace

TEST_SUITE("ica") {
  TEST_CASE("whitening white data keeps identity covariance") {
    const MatrixXd x = independent_sources(20000, {SourceDistribution::Uniform, SourceDistribution::Laplace}, 1);
    const Whitening w = whiten(x, 2);
    CHECK((covariance(w.white) - MatrixXd::Identity(2, 2)).norm() < 1e-8);
    // Output is an orthogonal transform of the (nearly white) centered input.
    const MatrixXd t = w.map * Eigen::SelfAdjointEigenSolver<MatrixXd>(covariance(x)).operatorSqrt();
    CHECK((t * t.transpose() - MatrixXd::Identity(2, 2)).norm() < 1e-8);
  }

  TEST_CASE("whitening anisotropic data") {
    Rng rng(2);
    MatrixXd x(5000, 4);
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < 4; ++j) x(i, j) = rng.normal();
    MatrixXd a(4, 4);
    a << 10, 0, 0, 0, 3, 0.1, 0, 0, 1, 2, 5, 0, 0, 0, 1, 0.01;
    x = x * a.transpose();
    const Whitening w = whiten(x, 4);
    CHECK((covariance(w.white) - MatrixXd::Identity(4, 4)).norm() < 1e-8);
    CHECK(w.eigenvalues(0) >= w.eigenvalues(1));
  }

  TEST_CASE("whitening rejects rank-deficient input and bad sizes") {
    MatrixXd x = MatrixXd::Random(100, 2) * MatrixXd::Random(2, 4);
    CHECK_THROWS_AS(whiten(x, 3), Error);
    CHECK_NOTHROW(whiten(x, 2));
    CHECK_THROWS_AS(whiten(x, 5), Error);
    CHECK_THROWS_AS(whiten(MatrixXd::Random(3, 4), 3), Error);
  }

  TEST_CASE("amari distance examples") {
    Rng rng(3);
    const MatrixXd g = random_mixing(5, 2, rng);
    const MatrixXd pinv = MixingMatrix(g).unmixing();
    CHECK(amari_distance(pinv, g) < 1e-10);
    MatrixXd perm(2, 2);
    perm << 0, 1, 1, 0;
    const MatrixXd m = Eigen::Vector2d(3.0, -2.0).asDiagonal() * perm * pinv;
    CHECK(amari_distance(m, g) < 1e-10);
    // [[1,1],[1,1]]: each row and column contributes 2/1 - 1 = 1, over 2 d (d - 1) = 4.
    CHECK(amari_distance(MatrixXd::Ones(2, 2), MatrixXd::Identity(2, 2)) == doctest::Approx(1.0));
    CHECK(amari_distance(MatrixXd::Ones(1, 3), MatrixXd::Ones(3, 1)) == 0.0);
    CHECK_THROWS_AS(amari_distance(MatrixXd::Ones(2, 3), MatrixXd::Ones(2, 2)), Error);
  }

  TEST_CASE("property: amari distance matches the oracle and ignores row order and global scale") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      const Index d = 2 + static_cast<Index>(rng.below(4));
      MatrixXd m(d, d), g = MatrixXd::Identity(d, d);
      for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) m(i, j) = rng.normal();
      const double base = amari_distance(m, g);
      CHECK(base == doctest::Approx(test::amari_oracle(m)).epsilon(1e-12));
      const auto perm = rng.permutation(static_cast<int>(d));
      MatrixXd shuffled(d, d);
      for (Index i = 0; i < d; ++i) shuffled.row(i) = m.row(perm[i]);
      const double scale = rng.uniform(0.1, 10.0) * (rng.bernoulli(0.5) ? -1 : 1);
      CHECK(amari_distance(scale * shuffled, g) == doctest::Approx(base).epsilon(1e-10));
    }
  }

  TEST_CASE("two uniform sources mixed by a random map") {
    const MatrixXd s = independent_sources(20000, {SourceDistribution::Uniform, SourceDistribution::Uniform}, 5);
    Rng rng(6);
    const MatrixXd g = random_mixing(2, 2, rng);
    const IcaResult r = fast_ica(s * g.transpose(), 2, {.seed = 7});
    CHECK(r.convergence.converged);
    CHECK(amari_distance(r.unmixing, g) < 0.05);
    // Sources are unit variance and decorrelated.
    CHECK((covariance(r.sources) - MatrixXd::Identity(2, 2)).norm() < 1e-8);
  }

  TEST_CASE("already independent columns") {
    const MatrixXd s = independent_sources(
        20000, {SourceDistribution::Laplace, SourceDistribution::Uniform, SourceDistribution::TwoPoint}, 8);
    const IcaResult r = fast_ica(s, 3, {.seed = 1});
    CHECK(amari_distance(r.unmixing, MatrixXd::Identity(3, 3)) < 0.05);
  }

  TEST_CASE("gaussian sources return without error") {
    Rng rng(9);
    MatrixXd x(2000, 2);
    for (Index i = 0; i < x.rows(); ++i) x.row(i) << rng.normal(), rng.normal();
    CHECK_NOTHROW(fast_ica(x, 2, {.max_iter = 50, .seed = 2}));
  }

  TEST_CASE("determinism, canonical form and covariance invariant") {
    const auto dom = test::make_domains(1, 3, 6, 10000, 12);
    const IcaConfig cfg{.seed = 3};
    const IcaResult a = fast_ica(dom.x[0], 3, cfg), b = fast_ica(dom.x[0], 3, cfg);
    CHECK(a.unmixing == b.unmixing);
    const MatrixXd mcm = a.unmixing * covariance(dom.x[0]) * a.unmixing.transpose();
    CHECK((mcm - MatrixXd::Identity(3, 3)).norm() < 1e-3);
    for (Index i = 0; i < 3; ++i) {
      Index arg;
      a.unmixing.row(i).cwiseAbs().maxCoeff(&arg);
      CHECK(a.unmixing(i, arg) > 0.0);
    }
    for (Index i = 0; i + 1 < 3; ++i) CHECK(a.nongaussianity(i) >= a.nongaussianity(i + 1));
    const MatrixXd centered = dom.x[0].rowwise() - dom.x[0].colwise().mean();
    CHECK((a.sources - centered * a.unmixing.transpose()).norm() < 1e-9 * a.sources.norm());
    CHECK((a.rotation * a.rotation.transpose() - MatrixXd::Identity(3, 3)).norm() < 1e-10);
  }

  TEST_CASE("property: sources match the true noise of an exact SCM") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto dom = test::make_domains(1, 3, 6, 20000, 100 + seed);
      const IcaResult r = fast_ica(dom.x[0], 3, {.seed = seed});
      for (double c : test::matched_abs_correlations(r.sources, dom.noise[0])) CHECK(c > 0.95);
    }
  }

  TEST_CASE("cube nonlinearity also separates") {
    const MatrixXd s = independent_sources(20000, {SourceDistribution::Uniform, SourceDistribution::TwoPoint}, 13);
    Rng rng(14);
    const MatrixXd g = random_mixing(3, 2, rng);
    const IcaResult r = fast_ica(s * g.transpose(), 2, {.nonlinearity = Nonlinearity::Cube, .seed = 4});
    CHECK(amari_distance(r.unmixing, g) < 0.05);
  }
}
