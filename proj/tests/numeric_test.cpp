#include <cmath>

#include "doctest.h"
#include "fend/errors.hpp"
#include "fend/grad_check.hpp"
#include "fend/optim.hpp"
#include "fend/tape.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using fend::num::Tape;
using fend::num::Tensor;

TEST_CASE("matmul identity and projection") {
  Tape t;
  const auto i2 = t.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  const auto a = t.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  const auto prod = t.matmul(i2, a);
  CHECK(t.val(prod).vec() == std::vector<double>{1, 2, 3, 4});

  const auto proj = t.matmul(t.constant(Tensor({2, 2}, {1, 0, 0, 0})),
                             t.constant(Tensor({2, 1}, {5, 7})));
  CHECK(t.val(proj).vec() == std::vector<double>{5, 0});
}

TEST_CASE("matmul matches the triple-loop oracle") {
  fend::Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto a = testutil::random_tensor({3, 4}, rng);
    const auto b = testutil::random_tensor({4, 2}, rng);
    Tape t;
    const auto c = t.matmul(t.constant(a), t.constant(b));
    const auto ref = oracle::matmul(a.vec(), b.vec(), 3, 4, 2);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(t.val(c)[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul shape mismatch throws") {
  Tape t;
  const auto a = t.constant(Tensor({2, 3}));
  const auto b = t.constant(Tensor({2, 3}));
  CHECK_THROWS_AS(t.matmul(a, b), fend::DimensionError);
}

TEST_CASE("matmul chains are associative within 1e-10") {
  fend::Rng rng(12);
  for (int rep = 0; rep < 10; ++rep) {
    const auto a = testutil::random_tensor({5, 5}, rng);
    const auto b = testutil::random_tensor({5, 5}, rng);
    const auto c = testutil::random_tensor({5, 5}, rng);
    Tape t;
    const auto ia = t.constant(a), ib = t.constant(b), ic = t.constant(c);
    const auto left = t.matmul(t.matmul(ia, ib), ic);
    const auto right = t.matmul(ia, t.matmul(ib, ic));
    for (std::size_t i = 0; i < 25; ++i) {
      CHECK(std::abs(t.val(left)[i] - t.val(right)[i]) < 1e-10);
    }
  }
}

TEST_CASE("layer_norm constant input maps to zeros") {
  Tape t;
  const auto y = t.layer_norm(t.constant(Tensor({4}, {1, 1, 1, 1})));
  for (std::size_t i = 0; i < 4; ++i) CHECK(t.val(y)[i] == 0.0);
}

TEST_CASE("layer_norm symmetric pair") {
  Tape t;
  const auto y = t.layer_norm(t.constant(Tensor({2}, {1, -1})));
  const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
  CHECK(t.val(y)[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(t.val(y)[1] == doctest::Approx(-expect).epsilon(1e-12));
}

TEST_CASE("layer_norm random vectors have zero mean and near-unit variance") {
  fend::Rng rng(13);
  for (int rep = 0; rep < 10; ++rep) {
    const auto x = testutil::random_tensor({8}, rng, -2.0, 2.0);
    Tape t;
    const auto y = t.layer_norm(t.constant(x));
    double mean = 0.0;
    for (std::size_t i = 0; i < 8; ++i) mean += t.val(y)[i];
    mean /= 8.0;
    CHECK(std::abs(mean) < 1e-12);
    double var = 0.0;
    for (std::size_t i = 0; i < 8; ++i) var += t.val(y)[i] * t.val(y)[i];
    var /= 8.0;
    CHECK(var <= 1.0);
    CHECK(var >= 1.0 - 1e-4);
  }
}

TEST_CASE("layer_norm shift and positive-rescale invariance") {
  fend::Rng rng(14);
  for (int rep = 0; rep < 10; ++rep) {
    const auto x = testutil::random_tensor({8}, rng, -2.0, 2.0);
    Tensor shifted = x, scaled = x;
    const double c = rng.uniform(0.5, 2.0);
    for (auto& v : shifted.vec()) v += 3.7;
    for (auto& v : scaled.vec()) v *= c;
    Tape t;
    const auto y0 = t.layer_norm(t.constant(x));
    const auto y1 = t.layer_norm(t.constant(shifted));
    const auto y2 = t.layer_norm(t.constant(scaled));
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(std::abs(t.val(y1)[i] - t.val(y0)[i]) < 1e-4);
      CHECK(std::abs(t.val(y2)[i] - t.val(y0)[i]) < 1e-4);
    }
  }
}

TEST_CASE("layer_norm rejects short vectors") {
  Tape t;
  CHECK_THROWS_AS(t.layer_norm(t.constant(Tensor({1}, {3.0}))), fend::DimensionError);
}

TEST_CASE("grad_check on a quadratic is exact to O(step^2)") {
  const auto f = [](Tape& t, const std::vector<Tape::Id>& ps) {
    return t.weighted_sum(t.mul(ps[0], ps[0]), Tensor({1}, {1.0}));
  };
  const double err = fend::num::grad_check(f, {Tensor({1}, {3.0})}, 1e-4);
  CHECK(err < 1e-8);
}

TEST_CASE("every op passes a finite-difference check") {
  fend::Rng rng(15);
  const auto check = [&](const fend::num::LossBuilder& f, std::vector<Tensor> params) {
    const double err = fend::num::grad_check(f, std::move(params), 1e-5);
    CHECK(err < 1e-6);
  };

  const auto wsum = [](Tape& t, Tape::Id x, fend::Rng& r) {
    Tensor w(t.val(x).shape());
    for (auto& v : w.vec()) v = r.uniform(-1, 1);
    return t.weighted_sum(x, std::move(w));
  };

  SUBCASE("elementwise, scale, activations") {
    check(
        [&](Tape& t, const std::vector<Tape::Id>& p) {
          fend::Rng r(1);
          const auto a = t.mul(t.add(p[0], p[1]), t.sub(p[0], t.scale(p[1], 0.7)));
          const auto b = t.tanh(t.sigmoid(t.add_const(a, 0.3)));
          return wsum(t, b, r);
        },
        {testutil::random_tensor({3, 4}, rng), testutil::random_tensor({3, 4}, rng)});
  }
  SUBCASE("sqrt") {
    check(
        [&](Tape& t, const std::vector<Tape::Id>& p) {
          fend::Rng r(2);
          return wsum(t, t.sqrt(t.add_const(t.mul(p[0], p[0]), 0.5)), r);
        },
        {testutil::random_tensor({5}, rng)});
  }
  SUBCASE("matmul and matmul_nt") {
    check(
        [&](Tape& t, const std::vector<Tape::Id>& p) {
          fend::Rng r(3);
          const auto y = t.matmul(p[0], p[1]);
          const auto z = t.matmul_nt(y, p[2]);
          return wsum(t, z, r);
        },
        {testutil::random_tensor({2, 3}, rng), testutil::random_tensor({3, 4}, rng),
         testutil::random_tensor({5, 4}, rng)});
  }
  SUBCASE("linear with bias") {
    check(
        [&](Tape& t, const std::vector<Tape::Id>& p) {
          fend::Rng r(4);
          return wsum(t, t.linear(p[0], p[1], p[2]), r);
        },
        {testutil::random_tensor({3, 4}, rng), testutil::random_tensor({5, 4}, rng),
         testutil::random_tensor({5}, rng)});
  }
  SUBCASE("row_sum, lse_rows, sum, mean") {
    check(
        [&](Tape& t, const std::vector<Tape::Id>& p) {
          fend::Rng r(5);
          const auto a = t.lse_rows(p[0]);
          const auto b = t.row_sum(p[0]);
          return t.add(t.add(wsum(t, a, r), wsum(t, b, r)),
                       t.add(t.sum(p[0]), t.mean(p[0])));
        },
        {testutil::random_tensor({4, 3}, rng)});
  }
  SUBCASE("layer_norm rows") {
    check(
        [&](Tape& t, const std::vector<Tape::Id>& p) {
          fend::Rng r(6);
          return wsum(t, t.layer_norm(p[0]), r);
        },
        {testutil::random_tensor({3, 5}, rng)});
  }
  SUBCASE("div_rows") {
    check(
        [&](Tape& t, const std::vector<Tape::Id>& p) {
          fend::Rng r(7);
          return wsum(t, t.div_rows(p[0], t.add_const(t.mul(p[1], p[1]), 1.0)), r);
        },
        {testutil::random_tensor({3, 4}, rng), testutil::random_tensor({3}, rng)});
  }
  SUBCASE("conv1d_same, time_slice, col_slice") {
    check(
        [&](Tape& t, const std::vector<Tape::Id>& p) {
          fend::Rng r(8);
          const auto y = t.conv1d_same(p[0], p[1], p[2]);
          const auto s = t.time_slice(y, 2);
          const auto c = t.col_slice(s, 1, 3);
          return t.add(wsum(t, c, r), t.sum(y));
        },
        {testutil::random_tensor({2, 5, 3}, rng), testutil::random_tensor({4, 3, 3}, rng),
         testutil::random_tensor({4}, rng)});
  }
}

TEST_CASE("gradients of unused parameters are exactly zero") {
  Tape t;
  const auto used = t.param(Tensor({2}, {1.0, 2.0}));
  const auto unused = t.param(Tensor({3}, {1.0, 2.0, 3.0}));
  const auto loss = t.sum(t.mul(used, used));
  t.backward(loss);
  for (std::size_t i = 0; i < 3; ++i) CHECK(t.grad(unused)[i] == 0.0);
  CHECK(t.grad(used)[0] == doctest::Approx(2.0));
  CHECK(t.grad(used)[1] == doctest::Approx(4.0));
}

TEST_CASE("gradients accumulate when a tensor is reused") {
  Tape t;
  const auto x = t.param(Tensor({1}, {3.0}));
  const auto loss = t.sum(t.add(t.mul(x, x), t.mul(x, x)));  // 2x^2
  t.backward(loss);
  CHECK(t.grad(x)[0] == doctest::Approx(12.0));
}

TEST_CASE("non-finite forward results throw NumericError") {
  Tape t;
  const auto x = t.constant(Tensor({1}, {-1.0}));
  CHECK_THROWS_AS(t.sqrt(x), fend::NumericError);
}

TEST_CASE("backward requires a scalar and runs once") {
  Tape t;
  const auto x = t.param(Tensor({2}, {1.0, 2.0}));
  CHECK_THROWS_AS(t.backward(x), fend::ContractError);
}

TEST_CASE("Adam minimizes a quadratic") {
  Tensor x({2}, {5.0, -3.0});
  fend::num::Adam adam({.lr = 0.1});
  for (int i = 0; i < 300; ++i) {
    Tape t;
    const auto id = t.param(x);
    const auto loss = t.sum(t.mul(id, id));
    t.backward(loss);
    std::vector<Tensor*> ps = {&x};
    std::vector<const Tensor*> gs = {&t.grad(id)};
    adam.step(ps, gs);
  }
  CHECK(std::abs(x[0]) < 1e-2);
  CHECK(std::abs(x[1]) < 1e-2);
}

TEST_CASE("rng streams are deterministic and fork-independent") {
  fend::Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform01() == b.uniform01());
  fend::Rng c(42);
  auto f1 = c.fork(1);
  auto f2 = c.fork(1);
  CHECK(f1.next_u64() != f2.next_u64());  // forks advance the parent
}
