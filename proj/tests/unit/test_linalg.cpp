#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "socnn/gradcheck.hpp"
#include "socnn/linalg.hpp"
#include "socnn/solayers.hpp"

using namespace socnn;

namespace {

Tensor reconstruct(const EigPair& e) {
  const std::size_t n = e.values.numel();
  Tensor d(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) d(i, i) = e.values[i];
  return oracle::matmul(oracle::matmul(e.vectors, d), oracle::transpose(e.vectors));
}

double orthogonality_error(const Tensor& u) {
  const Tensor utu = oracle::matmul(oracle::transpose(u), u);
  return oracle::max_diff(utu, Tensor::identity(u.shape()[1]));
}

}  // namespace

TEST_CASE("sym_eig on simple inputs") {
  const EigPair id = sym_eig(Tensor::identity(3));
  CHECK(id.values == Tensor::vector({1, 1, 1}));

  Tensor d(Shape{3, 3});
  d(0, 0) = 3;
  d(1, 1) = 1;
  d(2, 2) = 2;
  const EigPair e = sym_eig(d);
  CHECK(e.values == Tensor::vector({3, 2, 1}));
  // Permutation matrix with positive entries.
  CHECK(e.vectors == Tensor::matrix({{1, 0, 0}, {0, 0, 1}, {0, 1, 0}}));
}

TEST_CASE("sym_eig eigenvalues match the bisection oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor a = oracle::random_symmetric(5, rng);
    const EigPair e = sym_eig(a);
    const auto roots = oracle::eigenvalues_by_bisection(a);
    REQUIRE(roots.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(e.values[i] - roots[i]) < 1e-8);
  }
}

TEST_CASE("sym_eig reconstruction, orthogonality and ordering") {
  Rng rng(7);
  for (std::size_t n : {2, 3, 8, 17, 32, 64}) {
    const Tensor a = oracle::random_symmetric(n, rng);
    const EigPair e = sym_eig(a);
    CHECK(oracle::max_diff(reconstruct(e), a) < 1e-9);
    CHECK(orthogonality_error(e.vectors) < 1e-10);
    for (std::size_t i = 0; i + 1 < n; ++i) CHECK(e.values[i] >= e.values[i + 1]);
    // Sign convention: largest-magnitude entry of each column is positive.
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (std::abs(e.vectors(i, j)) > std::abs(e.vectors(best, j))) best = i;
      CHECK(e.vectors(best, j) > 0);
    }
  }
}

TEST_CASE("sym_eig on PSD input and error cases") {
  Rng rng(8);
  const Tensor x = oracle::random(Shape{3, 6}, rng);  // rank 3 in 6 dims
  const EigPair e = sym_eig(oracle::covariance(x));
  for (double s : e.values.data()) CHECK(s >= -1e-10);

  Tensor bad = Tensor::identity(2);
  bad(0, 1) = bad(1, 0) = std::nan("");
  CHECK_THROWS_AS(sym_eig(bad), NumericError);
  CHECK_THROWS_AS(sym_eig(Tensor(Shape{2, 3})), ShapeError);
}

TEST_CASE("sym_eig_backward identities") {
  Rng rng(3);
  const Tensor a = oracle::random_symmetric(4, rng);
  const EigPair e = sym_eig(a);
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor ds(Shape{4});
    ds[i] = 1;
    const Tensor da = sym_eig_backward(e, Tensor{}, ds);
    Tensor expect(Shape{4, 4});
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) expect(r, c) = e.vectors(r, i) * e.vectors(c, i);
    CHECK(oracle::max_diff(da, expect) < 1e-12);
  }

  // Fully degenerate spectrum with dU = 0 stays finite.
  const EigPair id = sym_eig(Tensor::identity(3));
  const Tensor ds = Tensor::vector({1, 2, 3});
  const Tensor da = sym_eig_backward(id, Tensor(Shape{3, 3}), ds);
  CHECK(all_finite(da));
  Tensor expect(Shape{3, 3});
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) expect(r, c) += ds[k] * id.vectors(r, k) * id.vectors(c, k);
  CHECK(oracle::max_diff(da, expect) < 1e-12);
}

TEST_CASE("eigenvector gradient matches finite differences") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    // SPD with well separated spectrum.
    const Tensor x = oracle::random(Shape{12, 4}, rng);
    const Tensor sigma = oracle::covariance(x);
    const EigPair e = sym_eig(sigma);
    double gap = INFINITY;
    for (std::size_t i = 0; i + 1 < 4; ++i) gap = std::min(gap, e.values[i] - e.values[i + 1]);
    if (gap < 1e-3) continue;
    const ScalarFn f = [](Graph<double>&, Var<double> s) {
      const Var<double> sym = scale(add(s, transpose(s)), 0.5);
      return sum(robust_rectify(sym));
    };
    CHECK(finite_diff_check(f, sigma).max_rel_error < 1e-5);

    const Tensor w = oracle::random(Shape{4, 4}, rng);
    const ScalarFn g = [&](Graph<double>&, Var<double> s) {
      const Var<double> sym = scale(add(s, transpose(s)), 0.5);
      return weighted_sum(spectral_map(sym, SpectralFn{[](double v) { return v * v * v; },
                                                       [](double v) { return 3 * v * v; }}),
                          w);
    };
    CHECK(finite_diff_check(g, sigma).max_rel_error < 1e-5);
  }
}

TEST_CASE("qr_thin") {
  SUBCASE("orthonormal input") {
    const Tensor a = Tensor::matrix({{0, 1}, {1, 0}, {0, 0}});
    const QrResult qr = qr_thin(a);
    CHECK(oracle::max_diff(qr.q, a) < 1e-15);
    CHECK(oracle::max_diff(qr.r, Tensor::identity(2)) < 1e-15);
  }
  SUBCASE("diagonal input") {
    const Tensor a = Tensor::matrix({{2, 0}, {0, 3}});
    const QrResult qr = qr_thin(a);
    CHECK(oracle::max_diff(qr.q, Tensor::identity(2)) < 1e-15);
    CHECK(oracle::max_diff(qr.r, a) < 1e-15);
  }
  SUBCASE("random tall matrices") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      const Tensor a = oracle::random(Shape{6, 3}, rng);
      const QrResult qr = qr_thin(a);
      CHECK(orthogonality_error(qr.q) < 1e-12);
      CHECK(oracle::max_diff(oracle::matmul(qr.q, qr.r), a) < 1e-12);
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(qr.r(i, i) > 0);
        for (std::size_t j = 0; j < i; ++j) CHECK(qr.r(i, j) == 0.0);
      }
    }
  }
  SUBCASE("rank deficiency") {
    const Tensor a = Tensor::matrix({{1, 2}, {2, 4}, {3, 6}});
    CHECK_THROWS_AS(qr_thin(a), NumericError);
    CHECK_THROWS_AS(qr_thin(Tensor(Shape{2, 3})), ShapeError);
  }
}

TEST_CASE("rank and minimum eigenvalue helpers") {
  Rng rng(30);
  const Tensor x = oracle::random(Shape{3, 6}, rng);
  CHECK(numerical_rank(oracle::covariance(x)) == 2);  // centred 3 samples
  CHECK(min_eigenvalue(Tensor::identity(4)) == doctest::Approx(1.0));
}
