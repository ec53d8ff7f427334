#include <doctest.h>

#include "oracles.hpp"
#include "socnn/tensor.hpp"

using namespace socnn;

TEST_CASE("shape element count and string") {
  CHECK(Shape{2, 3, 4}.numel() == 24);
  CHECK(Shape{}.numel() == 1);
  CHECK(Shape{3, 0}.numel() == 0);
  CHECK(Shape{2, 3}.str() == "(2x3)");
}

TEST_CASE("reshape_activations lays out spatial sites as rows") {
  SUBCASE("single site") {
    Tensor act(Shape{1, 1, 3}, {1, 2, 3});
    const Tensor x = reshape_activations(act);
    CHECK(x.shape() == Shape{1, 3});
    CHECK(x == Tensor::matrix({{1, 2, 3}}));
  }
  SUBCASE("two sites") {
    Tensor act(Shape{2, 1, 2}, {1, 2, 3, 4});
    CHECK(reshape_activations(act) == Tensor::matrix({{1, 2}, {3, 4}}));
  }
  SUBCASE("7x7x2048") {
    const Tensor x = reshape_activations(Tensor(Shape{7, 7, 2048}));
    CHECK(x.shape() == Shape{49, 2048});
  }
  SUBCASE("round trip is bit exact") {
    Rng rng(3);
    const Tensor act = oracle::random(Shape{4, 5, 3}, rng);
    const Tensor x = reshape_activations(act);
    CHECK(x.reshaped(act.shape()) == act);
  }
  SUBCASE("wrong rank") { CHECK_THROWS_AS(reshape_activations(Tensor(Shape{4, 4})), ShapeError); }
}

TEST_CASE("matmul examples") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::identity(2), a) == a);
  CHECK(matmul(a, Tensor::matrix({{1}, {1}})) == Tensor::matrix({{3}, {7}}));
  CHECK_THROWS_AS(matmul(Tensor(Shape{2, 3}), Tensor(Shape{4, 2})), ShapeError);
}

TEST_CASE("matmul agrees with the triple-loop oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(16), m = 1 + rng.below(16), p = 1 + rng.below(16);
    const Tensor a = oracle::random(Shape{n, m}, rng);
    const Tensor b = oracle::random(Shape{m, p}, rng);
    CHECK(max_abs_diff(matmul(a, b), oracle::matmul(a, b)) < 1e-12);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), oracle::matmul(a, b)) < 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), oracle::matmul(a, b)) < 1e-12);
  }
}

TEST_CASE("product transpose identity") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(8), m = 1 + rng.below(8), p = 1 + rng.below(8);
    const Tensor a = oracle::random(Shape{n, m}, rng);
    const Tensor b = oracle::random(Shape{m, p}, rng);
    CHECK(max_abs_diff(transpose(matmul(a, b)), matmul(transpose(b), transpose(a))) < 1e-12);
  }
}

TEST_CASE("elementwise helpers") {
  Rng rng(2);
  const Tensor a = oracle::random(Shape{3, 4}, rng);
  CHECK(hadamard(a, Tensor(Shape{3, 4}, 1.0)) == a);
  CHECK(transpose(transpose(a)) == a);
  const Tensor r = elementwise_map<double>(Tensor::vector({-1, 2}),
                                           [](double v) { return v > 0 ? v : 0.0; });
  CHECK(r == Tensor::vector({0, 2}));
  CHECK(scale(Tensor::vector({1, -2}), 3.0) == Tensor::vector({3, -6}));
  CHECK(add(a, scale(a, -1.0)) == Tensor(Shape{3, 4}));
  CHECK_THROWS_AS(add(a, Tensor(Shape{4, 3})), ShapeError);
  CHECK_THROWS_AS(hadamard(a, Tensor(Shape{12})), ShapeError);
}

TEST_CASE("symmetrize and reductions") {
  const Tensor a = Tensor::matrix({{1, 2}, {4, 3}});
  CHECK(symmetrize(a) == Tensor::matrix({{1, 3}, {3, 3}}));
  CHECK(sum(a) == 10.0);
  CHECK(frobenius_norm(Tensor::vector({3, 4})) == doctest::Approx(5.0));
  Tensor acc(Shape{2, 2});
  axpy_inplace(acc, 2.0, a);
  CHECK(acc == scale(a, 2.0));
}

TEST_CASE("no NaN shortcuts in matmul") {
  Tensor a = Tensor::matrix({{0, 1}});
  Tensor b = Tensor::matrix({{std::nan("")}, {1}});
  CHECK_FALSE(all_finite(matmul(a, b)));
}

TEST_CASE("float tensors") {
  const TensorF a = TensorF::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(a, TensorF::identity(2)) == a);
  CHECK(a.cast<double>().cast<float>() == a);
}
