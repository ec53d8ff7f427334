#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "socnn/gradcheck.hpp"
#include "socnn/linalg.hpp"
#include "socnn/solayers.hpp"

using namespace socnn;

namespace {

Tensor diag(std::initializer_list<double> d) {
  Tensor t(Shape{d.size(), d.size()});
  std::size_t i = 0;
  for (double v : d) t(i, i) = v, ++i;
  return t;
}

}  // namespace

TEST_CASE("cov_forward examples") {
  SUBCASE("identical rows") {
    const auto out = cov_forward(Tensor::matrix({{1, 2, 3}, {1, 2, 3}}), false);
    CHECK(out.sigma == Tensor(Shape{3, 3}));
    CHECK(out.mu == Tensor::vector({1, 2, 3}));
  }
  SUBCASE("two opposite rows") {
    const auto out = cov_forward(Tensor::matrix({{1, 0}, {-1, 0}}), false);
    CHECK(out.mu == Tensor::vector({0, 0}));
    CHECK(out.sigma == Tensor::matrix({{1, 0}, {0, 0}}));
    CHECK(out.c == out.sigma);
  }
  SUBCASE("two-pass oracle") {
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
      const Tensor x = oracle::random(Shape{7, 4}, rng);
      CHECK(oracle::max_diff(cov_forward(x, false).sigma, oracle::covariance(x)) < 1e-12);
    }
  }
  SUBCASE("empty input") { CHECK_THROWS(cov_forward(Tensor(Shape{0, 3}))); }
}

TEST_CASE("cov_forward symmetry, permutation and scale") {
  Rng rng(5);
  const Tensor x = oracle::random(Shape{9, 5}, rng);
  const Tensor s = cov_forward(x, false).sigma;
  CHECK(s == transpose(s));
  Tensor perm(x.shape());
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 5; ++j) perm(i, j) = x(8 - i, j);
  CHECK(oracle::max_diff(cov_forward(perm, false).sigma, s) < 1e-12);
  CHECK(oracle::max_diff(cov_forward(scale(x, 3.0), false).sigma, scale(s, 9.0)) < 1e-10);
}

TEST_CASE("mean augmentation") {
  const Tensor sigma = Tensor::matrix({{2, 1}, {1, 3}});
  CHECK(cov_augment(sigma, Tensor(Shape{2}), 0.3) ==
        Tensor::matrix({{2, 1, 0}, {1, 3, 0}, {0, 0, 1}}));
  const Tensor c = cov_augment(Tensor(Shape{1, 1}), Tensor::vector({1}), 0.3);
  CHECK(oracle::max_diff(c, Tensor::matrix({{0.09, 0.3}, {0.3, 1}})) < 1e-15);

  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto out = cov_forward(oracle::random(Shape{6, 4}, rng), true);
    CHECK(out.c.shape() == Shape{5, 5});
    CHECK(out.c(4, 4) == 1.0);
    CHECK(min_eigenvalue(out.c) >= -1e-9);
  }
}

TEST_CASE("o2t_forward") {
  Rng rng(4);
  const Tensor m = oracle::covariance(oracle::random(Shape{8, 4}, rng));
  CHECK(o2t_forward(m, O2TParams<double>{Tensor::identity(4)}) == m);
  CHECK(o2t_forward(Tensor::identity(2), O2TParams<double>{Tensor::matrix({{1, 1}})}) ==
        Tensor::matrix({{2}}));
  for (int t = 0; t < 10; ++t) {
    const Tensor w = oracle::random(Shape{3, 4}, rng);
    const Tensor y = o2t_forward(m, O2TParams<double>{w});
    CHECK(y == transpose(y));
    CHECK(min_eigenvalue(y) >= -1e-9);
  }
  CHECK_THROWS_AS(o2t_forward(m, O2TParams<double>{Tensor(Shape{3, 5})}), ShapeError);
}

TEST_CASE("o2t rank preservation with orthonormal weights") {
  Rng rng(9);
  const Tensor x = oracle::random(Shape{4, 8}, rng);  // rank 3 covariance in 8 dims
  const Tensor m = oracle::covariance(x);
  const std::size_t rank = numerical_rank(m);
  REQUIRE(rank == 3);
  const QrResult qr = qr_thin(oracle::random(Shape{8, 8}, rng));
  const Tensor y = o2t_forward(m, O2TParams<double>{transpose(qr.q), true});
  CHECK(numerical_rank(y) == rank);
}

TEST_CASE("pv_forward") {
  Rng rng(11);
  const Tensor y = oracle::covariance(oracle::random(Shape{8, 5}, rng));
  const Tensor v = pv_forward(y, PVParams<double>{Tensor::identity(5)});
  for (std::size_t i = 0; i < 5; ++i) CHECK(v[i] == doctest::Approx(y(i, i)).epsilon(1e-14));
  for (int t = 0; t < 20; ++t) {
    const PVParams<double> p{oracle::random(Shape{5, 3}, rng)};
    const Tensor a = pv_forward(y, p);
    const Tensor b = pv_forward_quadratic(y, p);
    CHECK(oracle::max_diff(a, b) < 1e-12);
    for (double e : a.data()) CHECK(e >= -1e-10);
  }
}

TEST_CASE("robust rectification") {
  CHECK(robust_f(0.0) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(robust_f(1.0) == doctest::Approx(std::sqrt(13.0) / 3.0 - 1.0 / 6.0).epsilon(1e-15));
  CHECK(robust_f(1.0) == doctest::Approx(1.0352).epsilon(1e-4));

  const Tensor zero_out = robust_rectify(Tensor(Shape{2, 2}));
  CHECK(oracle::max_diff(zero_out, scale(Tensor::identity(2), 1.0 / 6.0)) < 1e-15);

  const Tensor d = robust_rectify(diag({1, 0}));
  CHECK(oracle::max_diff(d, diag({robust_f(1.0), robust_f(0.0)})) < 1e-14);

  Rng rng(13);
  for (int t = 0; t < 20; ++t) {
    const Tensor s = oracle::covariance(oracle::random(Shape{3, 6}, rng));  // rank deficient
    CHECK(min_eigenvalue(robust_rectify(s)) >= robust_f(0.0) - 1e-9);
  }

  // Identity spectral map is an eigen round trip.
  const Tensor s = oracle::covariance(oracle::random(Shape{9, 4}, rng));
  Graph<double> g;
  const Tensor back = spectral_map(g.constant(s), identity_spectral_fn()).value();
  CHECK(oracle::max_diff(back, s) < 1e-12);
}

TEST_CASE("transition layer") {
  Rng rng(15);
  const Tensor x = oracle::random(Shape{5, 3}, rng);
  CHECK(transition_forward(x, TransitionParams<double>{Tensor::identity(3), Tensor(Shape{3})}) == x);
  const Tensor c = Tensor::vector({1, -2});
  const Tensor y = transition_forward(x, TransitionParams<double>{Tensor(Shape{2, 3}), c});
  for (std::size_t k = 0; k < 5; ++k) CHECK((y(k, 0) == 1 && y(k, 1) == -2));

  const Tensor w = oracle::random(Shape{2, 3}, rng);
  const Tensor z = transition_forward(x, TransitionParams<double>{w, c});
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t o = 0; o < 2; ++o) {
      double s = c[o];
      for (std::size_t i = 0; i < 3; ++i) s += w(o, i) * x(k, i);
      CHECK(std::abs(z(k, o) - s) < 1e-12);
    }
}

TEST_CASE("second-order layer gradients") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Tensor x = oracle::random(Shape{7, 5}, rng);
    const Tensor r6 = oracle::random(Shape{6, 6}, rng);
    const ScalarFn cov_fn = [&](Graph<double>&, Var<double> v) {
      return weighted_sum(cov_layer(v, CovLayerOptions{}), r6);
    };
    CHECK(finite_diff_check(cov_fn, x).max_rel_error < 1e-5);

    const Tensor w = oracle::random(Shape{3, 5}, rng);
    const Tensor m = oracle::covariance(x);
    const Tensor r3 = oracle::random(Shape{3, 3}, rng);
    const ScalarFn o2t_w = [&](Graph<double>& g, Var<double> v) {
      return weighted_sum(o2t(g.constant(m), v), r3);
    };
    CHECK(finite_diff_check(o2t_w, w).max_rel_error < 1e-5);

    const Tensor pw = oracle::random(Shape{5, 4}, rng);
    const Tensor r4 = oracle::random(Shape{4}, rng);
    const ScalarFn pv_y = [&](Graph<double>& g, Var<double> v) {
      return weighted_sum(pv(v, g.constant(pw)), r4);
    };
    CHECK(finite_diff_check(pv_y, m).max_rel_error < 1e-5);

    const ScalarFn robust_cov = [&](Graph<double>&, Var<double> v) {
      CovLayerOptions o;
      o.robust = true;
      return weighted_sum(cov_layer(v, o), r6);
    };
    CHECK(finite_diff_check(robust_cov, x).max_rel_error < 1e-5);
  }
}

TEST_CASE("fault injection flips one backward rule") {
  Rng rng(1);
  const Tensor m = oracle::covariance(oracle::random(Shape{8, 4}, rng));
  const Tensor w = oracle::random(Shape{2, 4}, rng);
  const Tensor r = oracle::random(Shape{2, 2}, rng);
  const ScalarFn f = [&](Graph<double>& g, Var<double> v) {
    return weighted_sum(o2t(g.constant(m), v), r);
  };
  debug::inject_backward_fault("o2t");
  const double bad = finite_diff_check(f, w).max_rel_error;
  debug::inject_backward_fault("");
  CHECK(bad > 1e-3);
  CHECK(finite_diff_check(f, w).max_rel_error < 1e-5);
  CHECK_THROWS(debug::inject_backward_fault("nonsense"));
}
