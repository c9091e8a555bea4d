#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "harfuse/tensor.hpp"

using namespace harfuse;

TEST_CASE("zeros and ones") {
  const Tensor z = zeros({2, 3});
  CHECK(z.shape() == Shape{2, 3});
  CHECK(z.size() == 6);
  for (double v : z) CHECK(v == 0.0);

  const Tensor o = ones({1});
  CHECK(o.size() == 1);
  CHECK(o[0] == 1.0);

  CHECK(sum(zeros({4, 1, 2})) == 0.0);
}

TEST_CASE("zero or missing dimensions are shape errors") {
  CHECK_THROWS_AS(zeros({}), ShapeError);
  CHECK_THROWS_AS(zeros({3, 0}), ShapeError);
  CHECK_THROWS_AS(ones({0}), ShapeError);
}

TEST_CASE("randn statistics and determinism") {
  Rng rng(1);
  const Tensor a = randn({10000}, rng, 1.0);
  const double mean = sum(a) / 10000.0;
  CHECK(mean > -0.05);
  CHECK(mean < 0.05);

  Rng r1(42), r2(42);
  CHECK(randn({3}, r1) == randn({3}, r2));

  Rng rs(7);
  const Tensor s = randn({10000}, rs, 0.1);
  const double m = sum(s) / 10000.0;
  double var = 0.0;
  for (double v : s) var += (v - m) * (v - m);
  const double sd = std::sqrt(var / 10000.0);
  CHECK(sd > 0.095);
  CHECK(sd < 0.105);

  Rng bad(0);
  CHECK_THROWS_AS(randn({2}, bad, 0.0), ParameterError);
  CHECK_THROWS_AS(randn({2}, bad, -1.0), ParameterError);
}

TEST_CASE("same seed gives bit-identical streams; different seeds differ") {
  for (std::uint64_t seed : {0ULL, 1ULL, 123456789ULL}) {
    Rng a(seed), b(seed);
    const Tensor x = randn({257}, a, 0.3);
    const Tensor y = randn({257}, b, 0.3);
    CHECK(x == y);
  }
  Rng a(1), b(2);
  CHECK_FALSE(randn({8}, a) == randn({8}, b));
}

TEST_CASE("splitmix64 reference outputs") {
  // First outputs of SplitMix64 seeded with 0 (published reference values).
  Rng rng(0);
  CHECK(rng.next_u64() == 0xE220A8397B1DCDAFULL);
  CHECK(rng.next_u64() == 0x6E789E6AA1B965F4ULL);
  CHECK(rng.next_u64() == 0x06C45D188009454FULL);
}

TEST_CASE("matmul") {
  Rng rng(3);
  const Tensor a = randn({3, 4}, rng);
  CHECK(max_abs_diff(matmul(identity(3), a), a) == 0.0);

  const Tensor m({2, 2}, {1, 2, 3, 4});
  const Tensor v({2, 1}, {1, 1});
  CHECK(matmul(m, v) == Tensor({2, 1}, {3, 7}));

  const Tensor z = matmul(a, zeros({4, 5}));
  CHECK(z == zeros({3, 5}));

  CHECK_THROWS_AS(matmul(a, zeros({3, 3})), ShapeError);
}

TEST_CASE("matmul associativity for random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = 1 + static_cast<Index>(rng.uniform_index(8));
    const Index k = 1 + static_cast<Index>(rng.uniform_index(8));
    const Index n = 1 + static_cast<Index>(rng.uniform_index(8));
    const Index p = 1 + static_cast<Index>(rng.uniform_index(8));
    const Tensor a = randn({m, k}, rng), b = randn({k, n}, rng), c = randn({n, p}, rng);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) < 1e-9);
  }
}

TEST_CASE("concat, slice, reshape") {
  Rng rng(5);
  const Tensor a = randn({5, 2}, rng);
  const Tensor b = randn({5, 3}, rng);
  const Tensor ab = concat({a, b}, 1);
  CHECK(ab.shape() == Shape{5, 5});
  CHECK(slice(ab, 1, 0, 2) == a);
  CHECK(slice(ab, 1, 2, 5) == b);

  CHECK_THROWS_AS(concat({a, randn({4, 3}, rng)}, 1), ShapeError);
  CHECK_THROWS_AS(concat({a, b}, 2), ShapeError);
  CHECK_THROWS_AS(slice(a, 0, 3, 9), ShapeError);

  const Tensor seq({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor r = reshape(seq, {3, 2});
  CHECK(r(0, 0) == 1.0);
  CHECK(r(0, 1) == 2.0);
  CHECK(r(2, 1) == 6.0);
  CHECK_THROWS_AS(reshape(seq, {4, 2}), ShapeError);
}

TEST_CASE("concat then slice at the seam recovers operands (random shapes)") {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    const Index rank = 1 + static_cast<Index>(rng.uniform_index(4));
    Shape sa, sb;
    for (Index i = 0; i < rank; ++i) {
      const Index d = 1 + static_cast<Index>(rng.uniform_index(4));
      sa.push_back(d);
      sb.push_back(d);
    }
    const Index axis = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(rank)));
    sb[static_cast<std::size_t>(axis)] = 1 + static_cast<Index>(rng.uniform_index(4));
    const Tensor a = randn(sa, rng), b = randn(sb, rng);
    const Tensor joined = concat({a, b}, axis);
    CHECK(slice(joined, axis, 0, a.dim(axis)) == a);
    CHECK(slice(joined, axis, a.dim(axis), joined.dim(axis)) == b);
  }
}

TEST_CASE("reduce_mean") {
  CHECK(reduce_mean(ones({4, 4}))[0] == 1.0);
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const double c = rng.uniform(-5, 5);
    const Tensor t = full<double>({3, 2, 5}, c);
    CHECK(reduce_mean(t)[0] == doctest::Approx(c).epsilon(1e-14));
  }
  const Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor rows = reduce_mean(m, {1});
  CHECK(rows.shape() == Shape{2, 1});
  CHECK(rows[0] == 2.0);
  CHECK(rows[1] == 5.0);
  const Tensor cols = reduce_mean(m, {0});
  CHECK(cols == Tensor({1, 3}, {2.5, 3.5, 4.5}));
  CHECK_THROWS_AS(reduce_mean(m, {2}), ShapeError);
}

TEST_CASE("map, zip, permute, resize_axis") {
  const Tensor a({2, 2}, {1, -2, 3, -4});
  CHECK(map(a, [](double v) { return v * 2; }) == Tensor({2, 2}, {2, -4, 6, -8}));
  CHECK(zip(a, a, [](double x, double y) { return x * y; }) == Tensor({2, 2}, {1, 4, 9, 16}));
  CHECK_THROWS_AS(zip(a, zeros({4}), [](double x, double) { return x; }), ShapeError);

  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor tt = permute(t, {1, 0});
  CHECK(tt.shape() == Shape{3, 2});
  CHECK(tt(0, 1) == 4.0);
  CHECK(permute(tt, {1, 0}) == t);

  const Tensor padded = resize_axis(t, 1, 5);
  CHECK(padded.shape() == Shape{2, 5});
  CHECK(padded(1, 2) == 6.0);
  CHECK(padded(1, 4) == 0.0);
  CHECK(resize_axis(padded, 1, 3) == t);
}
