#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gali/rng.hpp"
#include "gali/tape.hpp"
#include "testutil.hpp"

using namespace gali;

TEST_CASE("tensor shape contract") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({0, 3}), ShapeError);
}

TEST_CASE("matmul identity") {
  Tape t;
  Var id = t.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var a = t.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK(t.value(t.matmul(id, a)) == t.value(a));
}

TEST_CASE("matmul against triple-loop oracle") {
  Tape t;
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  const Tensor got = t.value(t.matmul(t.constant(a), t.constant(b)));
  CHECK(got == Tensor({2, 2}, {19, 22, 43, 50}));
  CHECK(got == testutil::matmul_oracle(a, b));

  Rng rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor ra = rng.normal_tensor({4, 7});
    Tensor rb = rng.normal_tensor({7, 3});
    Tape t2;
    const Tensor fast = t2.value(t2.matmul(t2.constant(ra), t2.constant(rb)));
    const Tensor slow = testutil::matmul_oracle(ra, rb);
    for (std::size_t i = 0; i < fast.size(); ++i) CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul shape mismatch") {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({2, 3}));
  CHECK_THROWS_AS(t.matmul(a, b), ShapeError);
}

TEST_CASE("matmul backward matches finite differences") {
  ParamStore ps;
  Rng rng(17);
  Parameter& a = ps.add("a", rng.normal_tensor({3, 4}));
  Parameter& b = ps.add("b", rng.normal_tensor({4, 2}));
  const double err = grad_check(
      ps, [&](Tape& t) { return t.sum_all(t.matmul(t.param(a), t.param(b))); }, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("softmax_rows examples") {
  Tape t;
  const Tensor u = t.value(t.softmax_rows(t.constant(Tensor({1, 4}))));
  for (int j = 0; j < 4; ++j) CHECK(u.at(0, j) == doctest::Approx(0.25).epsilon(1e-14));

  const Tensor w =
      t.value(t.softmax_rows(t.constant(Tensor({1, 2}, {std::log(1.0), std::log(3.0)}))));
  CHECK(w.at(0, 0) == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(w.at(0, 1) == doctest::Approx(0.75).epsilon(1e-13));

  const Tensor big = t.value(t.softmax_rows(t.constant(Tensor({1, 2}, {1000.0, 0.0}))));
  CHECK(big.all_finite());
  CHECK(big.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and stay positive") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tape t;
    const Tensor p = t.value(t.softmax_rows(t.constant(rng.uniform_tensor({5, 6}, -30.0, 30.0))));
    for (int i = 0; i < p.rows(); ++i) {
      double s = 0.0;
      for (int j = 0; j < p.cols(); ++j) {
        CHECK(p.at(i, j) > 0.0);
        s += p.at(i, j);
      }
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("elementwise examples") {
  Tape t;
  CHECK(t.value(t.tanh(t.constant(Tensor::scalar(0.0))))[0] == 0.0);
  CHECK(t.value(t.leaky_relu(t.constant(Tensor::scalar(-2.0)), 0.02))[0] ==
        doctest::Approx(-0.04).epsilon(1e-15));

  // d/dx sum(x^2) at [1,2,3] is [2,4,6]
  ParamStore ps;
  Parameter& x = ps.add("x", Tensor({1, 3}, {1, 2, 3}));
  Tape t2;
  t2.backward(t2.sum_all(t2.square(t2.param(x))));
  CHECK(x.grad == Tensor({1, 3}, {2, 4, 6}));
}

TEST_CASE("log raises on non-positive input") {
  Tape t;
  CHECK_THROWS_AS(t.log(t.constant(Tensor::scalar(0.0))), DomainError);
  CHECK_THROWS_AS(t.log(t.constant(Tensor::scalar(-1.0))), DomainError);
}

TEST_CASE("backward requires scalar loss") {
  ParamStore ps;
  Parameter& x = ps.add("x", Tensor({2, 2}));
  Tape t;
  Var y = t.square(t.param(x));
  CHECK_THROWS_AS(t.backward(y), ShapeError);
}

TEST_CASE("backward accumulates additively") {
  ParamStore ps;
  Rng rng(5);
  Parameter& x = ps.add("x", rng.normal_tensor({2, 3}));
  Tape t;
  Var loss = t.mean_all(t.square(t.param(x)));
  ps.zero_grads();
  t.backward(loss);
  const Tensor once = x.grad;
  t.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(x.grad[i] == 2.0 * once[i]);
}

TEST_CASE("graph replay is bit-identical") {
  Rng rng(11);
  const Tensor a = rng.normal_tensor({4, 4});
  const Tensor b = rng.normal_tensor({4, 4});
  auto run = [&]() {
    Tape t;
    Var h = t.tanh(t.matmul(t.constant(a), t.constant(b)));
    return t.value(t.softmax_rows(h));
  };
  CHECK(run() == run());
}

TEST_CASE("grad_check on constant loss leaves gradients exactly zero") {
  ParamStore ps;
  Rng rng(7);
  Parameter& x = ps.add("x", rng.normal_tensor({3, 3}));
  Tape t;
  Var loss = t.mean_all(t.constant(Tensor::scalar(4.0)));
  ps.zero_grads();
  t.backward(loss);
  for (std::size_t i = 0; i < x.grad.size(); ++i) CHECK(x.grad[i] == 0.0);
}

TEST_CASE("grad_check quadratic is tight") {
  ParamStore ps;
  Rng rng(23);
  Parameter& w = ps.add("w", rng.normal_tensor({3, 3}));
  const double err =
      grad_check(ps, [&](Tape& t) { return t.sum_all(t.square(t.param(w))); }, 1e-5);
  CHECK(err < 1e-6);
}

// every differentiable op against central differences on 10 seeds
TEST_CASE("full op inventory matches finite differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    ParamStore ps;
    Parameter& a = ps.add("a", rng.normal_tensor({3, 4}));
    Parameter& b = ps.add("b", rng.normal_tensor({3, 4}));
    Parameter& w = ps.add("w", rng.normal_tensor({5, 4}));
    Parameter& bias = ps.add("bias", rng.normal_tensor({5}));
    Parameter& pos = ps.add("pos", rng.uniform_tensor({3, 4}, 0.5, 1.5));
    const Tensor cmat = rng.normal_tensor({3, 5});
    std::vector<std::uint8_t> sel(12, 0);
    for (std::size_t i = 0; i < sel.size(); i += 2) sel[i] = 1;

    auto build = [&](Tape& t) {
      Var av = t.param(a);
      Var bv = t.param(b);
      Var mixed = t.mul(t.add(av, bv), t.sub(av, t.scale(bv, 0.5)));
      Var lin = t.add_row(t.matmul_nt(mixed, t.param(w)), t.param(bias));  // [3,5]
      Var act = t.add(t.tanh(lin), t.leaky_relu(lin, 0.02));
      Var sm = t.mul(t.softmax_rows(act), t.constant(cmat));
      Var lsm = t.log_softmax_rows(act);
      Var lom = t.log_one_minus_softmax_col(act, 1);
      Var cat = t.concat_cols({t.col(sm, 0), lom});
      Var logs = t.add(t.log(t.param(pos)), t.exp(t.scale(t.param(pos), -1.0)));
      Var sel1 = t.select_fill(av, sel, 0.25);
      Var sel2 = t.select_mix(av, t.square(bv), sel);
      Var cl = t.clamp(mixed, -0.75, 0.75);
      Var rescaled = t.scale_by(mixed, t.recip(t.sum_all(t.square(t.param(pos)))));
      return t.add(
          t.add(t.mean_all(cat), t.sum_all(t.mul(lsm, t.constant(cmat)))),
          t.add(t.add(t.mean_all(logs), t.add(t.mean_all(cl), t.mean_all(rescaled))),
                t.add(t.mean_all(sel1), t.mean_all(sel2))));
    };
    CHECK(grad_check(ps, build, 1e-5) < 1e-4);
  }
}

TEST_CASE("rng determinism and draw counters") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(43);
  c.normal_tensor({3, 5});
  CHECK(c.normal_draws() == 15);
  c.uniform_int(0, 9);
  CHECK(c.int_draws() == 1);
}
