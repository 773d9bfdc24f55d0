#include <doctest.h>

#include <cmath>

#include "mvmol/autodiff.hpp"
#include "mvmol/grad_check.hpp"
#include "mvmol/optim.hpp"
#include "mvmol/rng.hpp"

using namespace mvmol;

namespace {

template <class S>
TensorT<S> random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorT<S> t = TensorT<S>::zeros(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul identity and small product") {
  Tape tape;
  Var I = tape.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var A = tape.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  Var C = matmul(I, A);
  CHECK(C.val().data == std::vector<float>{1, 2, 3, 4});

  Var r = tape.constant(Tensor({1, 2}, {1, 2}));
  Var c = tape.constant(Tensor({2, 1}, {3, 4}));
  CHECK(matmul(r, c).val().item() == doctest::Approx(11.0));
}

TEST_CASE("matmul shape mismatch") {
  Tape tape;
  Var a = tape.constant(Tensor::zeros({2, 3}));
  Var b = tape.constant(Tensor::zeros({2, 3}));
  CHECK_THROWS_AS(matmul(a, b), Error);
}

TEST_CASE("matmul gradients vs finite differences") {
  Rng rng(7);
  TensorD a = random_tensor<double>({3, 4}, rng);
  TensorD b = random_tensor<double>({4, 2}, rng);
  // d/dA of sum(A*B)
  double err_a = grad_check<double>(
      [&](TapeD& t, VarD x) { return sum_all(matmul(x, t.constant(b))); }, a);
  double err_b = grad_check<double>(
      [&](TapeD& t, VarD x) { return sum_all(matmul(t.constant(a), x)); }, b);
  CHECK(err_a <= 1e-4);
  CHECK(err_b <= 1e-4);
}

TEST_CASE("softmax symmetric and saturated rows") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 2}, {0, 0}));
  auto y = softmax_rows(x).val();
  CHECK(y.data[0] == doctest::Approx(0.5));
  CHECK(y.data[1] == doctest::Approx(0.5));

  Var sat = tape.constant(Tensor({1, 2}, {1000, 0}));
  auto ys = softmax_rows(sat).val();
  CHECK(std::fabs(ys.data[0] - 1.0) <= 1e-12);
  CHECK(std::fabs(ys.data[1] - 0.0) <= 1e-12);
}

TEST_CASE("softmax rows sum to one and match a double-precision oracle") {
  Rng rng(11);
  TensorD x = random_tensor<double>({2, 5}, rng, -3.0, 3.0);
  TapeD tape;
  auto y = softmax_rows(tape.constant(x)).val();
  for (int i = 0; i < 2; ++i) {
    double sum = 0.0;
    double denom = 0.0;
    for (int j = 0; j < 5; ++j) denom += std::exp(x.at(i, j));
    for (int j = 0; j < 5; ++j) {
      sum += y.at(i, j);
      CHECK(y.at(i, j) == doctest::Approx(std::exp(x.at(i, j)) / denom).epsilon(1e-9));
      CHECK(y.at(i, j) >= 0.0);
      CHECK(y.at(i, j) <= 1.0);
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("softmax mask zeroes entries; fully masked row is an error") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 3}, {5, 1, 2}));
  std::vector<uint8_t> mask = {1, 0, 1};
  auto y = softmax_rows(x, &mask).val();
  CHECK(y.data[1] == 0.0f);
  CHECK(y.data[0] + y.data[2] == doctest::Approx(1.0));

  std::vector<uint8_t> dead = {0, 0, 0};
  CHECK_THROWS_AS(softmax_rows(x, &dead), Error);
}

TEST_CASE("softmax gradient check") {
  Rng rng(13);
  TensorD x = random_tensor<double>({2, 4}, rng);
  TensorD w = random_tensor<double>({2, 4}, rng);
  double err = grad_check<double>(
      [&](TapeD& t, VarD v) { return sum_all(mul(softmax_rows(v), t.constant(w))); }, x);
  CHECK(err <= 1e-4);
}

TEST_CASE("layer_norm collapses constant rows and respects gain/bias") {
  Tape tape;
  Var x = tape.constant(Tensor({1, 4}, {3, 3, 3, 3}));
  Var g1 = tape.constant(Tensor::full({1, 4}, 1.0f));
  Var b0 = tape.constant(Tensor::zeros({1, 4}));
  auto y = layer_norm(x, g1, b0).val();
  for (float v : y.data) CHECK(v == doctest::Approx(0.0));

  Var xr = tape.constant(Tensor({1, 4}, {1, -2, 5, 0}));
  Var g0 = tape.constant(Tensor::zeros({1, 4}));
  Var b = tape.constant(Tensor({1, 4}, {7, 8, 9, 10}));
  auto yb = layer_norm(xr, g0, b).val();
  CHECK(yb.data == std::vector<float>{7, 8, 9, 10});
}

TEST_CASE("layer_norm gradient check") {
  Rng rng(17);
  TensorD x = random_tensor<double>({3, 5}, rng);
  TensorD g = random_tensor<double>({1, 5}, rng, 0.5, 1.5);
  TensorD b = random_tensor<double>({1, 5}, rng);
  TensorD w = random_tensor<double>({3, 5}, rng);
  auto weighted = [&](TapeD& t, VarD y) { return sum_all(mul(y, t.constant(w))); };
  double ex = grad_check<double>(
      [&](TapeD& t, VarD v) { return weighted(t, layer_norm(v, t.constant(g), t.constant(b))); }, x);
  double eg = grad_check<double>(
      [&](TapeD& t, VarD v) { return weighted(t, layer_norm(t.constant(x), v, t.constant(b))); }, g);
  double eb = grad_check<double>(
      [&](TapeD& t, VarD v) { return weighted(t, layer_norm(t.constant(x), t.constant(g), v)); }, b);
  CHECK(ex <= 1e-4);
  CHECK(eg <= 1e-4);
  CHECK(eb <= 1e-4);
}

TEST_CASE("l2_normalize basics") {
  Tape tape;
  auto y = l2_normalize_rows(tape.constant(Tensor({1, 2}, {3, 4}))).val();
  CHECK(y.data[0] == doctest::Approx(0.6));
  CHECK(y.data[1] == doctest::Approx(0.8));

  auto unit = l2_normalize_rows(tape.constant(Tensor({1, 2}, {0, 1}))).val();
  CHECK(unit.data[0] == doctest::Approx(0.0));
  CHECK(unit.data[1] == doctest::Approx(1.0));

  Rng rng(3);
  TensorD x = random_tensor<double>({1, 7}, rng);
  TapeD td;
  auto yn = l2_normalize_rows(td.constant(x)).val();
  double norm = 0.0;
  for (double v : yn.data) norm += v * v;
  CHECK(std::fabs(std::sqrt(norm) - 1.0) <= 1e-6);

  CHECK_THROWS_AS(l2_normalize_rows(tape.constant(Tensor({1, 3}, {0, 0, 0}))), Error);
}

TEST_CASE("cross_entropy analytic values") {
  Tape tape;
  Var uniform = tape.constant(Tensor::zeros({3, 2}));
  CHECK(cross_entropy(uniform, {0, 1, 0}).val().item() == doctest::Approx(std::log(2.0)));

  Var sat = tape.constant(Tensor({1, 3}, {50, 0, 0}));
  CHECK(cross_entropy(sat, {0}).val().item() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("cross_entropy vs double oracle plus gradient check") {
  Rng rng(23);
  TensorD logits = random_tensor<double>({4, 6}, rng, -2.0, 2.0);
  std::vector<int> targets = {1, 0, 5, 3};
  double expected = 0.0;
  for (int i = 0; i < 4; ++i) {
    double denom = 0.0;
    for (int j = 0; j < 6; ++j) denom += std::exp(logits.at(i, j));
    expected += -std::log(std::exp(logits.at(i, targets[static_cast<size_t>(i)])) / denom);
  }
  expected /= 4.0;
  TapeD tape;
  CHECK(cross_entropy(tape.constant(logits), targets).val().item() ==
        doctest::Approx(expected).epsilon(1e-9));

  double err = grad_check<double>(
      [&](TapeD& t, VarD v) { return cross_entropy(v, targets); }, logits);
  CHECK(err <= 1e-4);
}

TEST_CASE("cross_entropy ignore_index and empty reduction") {
  Tape tape;
  Var logits = tape.constant(Tensor({2, 3}, {1, 0, 0, 0, 5, 0}));
  auto with_ignore = cross_entropy(logits, {0, -1}, -1);
  auto only_first = cross_entropy(logits, {0, 1});  // row 1 target 1 is near-saturated
  CHECK(with_ignore.val().item() > 0.0f);
  CHECK(with_ignore.val().item() != only_first.val().item());
  CHECK_THROWS_AS(cross_entropy(logits, {-1, -1}, -1), Error);
}

TEST_CASE("backward populates leaf gradients") {
  Tensor x({1, 3}, {1, 2, 3});
  x.requires_grad = true;
  Tape tape;
  Var vx = tape.leaf(x);
  tape.backward(sum_all(vx));
  CHECK(x.grad == std::vector<float>{1, 1, 1});
}

TEST_CASE("backward product rule") {
  Tensor x({1, 2}, {2, 5});
  Tensor y({1, 2}, {7, 3});
  x.requires_grad = y.requires_grad = true;
  Tape tape;
  tape.backward(sum_all(mul(tape.leaf(x), tape.leaf(y))));
  CHECK(x.grad == std::vector<float>{7, 3});
  CHECK(y.grad == std::vector<float>{2, 5});
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x({1, 2}, {1, 2});
  x.requires_grad = true;
  Tape tape;
  Var vx = tape.leaf(x);
  CHECK_THROWS_AS(tape.backward(vx), Error);
}

TEST_CASE("backward accumulates across calls") {
  Tensor x({1, 2}, {1, 2});
  x.requires_grad = true;
  Tape tape;
  Var loss = sum_all(tape.leaf(x));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(x.grad == std::vector<float>{2, 2});
}

TEST_CASE("backward sums contributions from two consumers") {
  Rng rng(5);
  TensorD x = random_tensor<double>({2, 3}, rng);
  // f(x) = sum(x ⊙ x) + sum(softmax(x)^2-ish chain with x reused)
  double err = grad_check<double>(
      [&](TapeD& t, VarD v) { return add(sum_all(mul(v, v)), sum_all(softmax_rows(v))); }, x);
  CHECK(err <= 1e-4);
}

TEST_CASE("three layer perceptron matches finite differences") {
  Rng rng(29);
  TensorD x = random_tensor<double>({2, 3}, rng);
  TensorD w1 = random_tensor<double>({3, 4}, rng, -0.5, 0.5);
  TensorD b1 = random_tensor<double>({1, 4}, rng, -0.1, 0.1);
  TensorD w2 = random_tensor<double>({4, 4}, rng, -0.5, 0.5);
  TensorD b2 = random_tensor<double>({1, 4}, rng, -0.1, 0.1);
  TensorD w3 = random_tensor<double>({4, 2}, rng, -0.5, 0.5);
  std::vector<int> targets = {0, 1};

  auto net = [&](TapeD& t, VarD in, VarD vw1, VarD vw2, VarD vw3) {
    VarD h1 = gelu(add_rowvec(matmul(in, vw1), t.constant(b1)));
    VarD h2 = gelu(add_rowvec(matmul(h1, vw2), t.constant(b2)));
    return cross_entropy(matmul(h2, vw3), targets);
  };
  double ex = grad_check<double>(
      [&](TapeD& t, VarD v) {
        return net(t, v, t.constant(w1), t.constant(w2), t.constant(w3));
      },
      x);
  double e1 = grad_check<double>(
      [&](TapeD& t, VarD v) {
        return net(t, t.constant(x), v, t.constant(w2), t.constant(w3));
      },
      w1);
  double e3 = grad_check<double>(
      [&](TapeD& t, VarD v) {
        return net(t, t.constant(x), t.constant(w1), t.constant(w2), v);
      },
      w3);
  CHECK(ex <= 1e-4);
  CHECK(e1 <= 1e-4);
  CHECK(e3 <= 1e-4);
}

TEST_CASE("grad_check calibration: exact quadratic and corrupted rule") {
  Rng rng(31);
  TensorD x = random_tensor<double>({1, 5}, rng);
  double quad = grad_check<double>(
      [&](TapeD& t, VarD v) { return sum_all(mul(v, v)); }, x);
  CHECK(quad <= 1e-8);

  // negative control: a rule whose analytic gradient is wrong by 5% must trip
  auto bad_square = [](TapeD& t, VarD v) {
    TensorT<double> out = v.val();
    for (auto& e : out.data) e = e * e;
    return t.make(
        std::move(out), {v.id},
        [vid = v.id](TapeD& tt, int self) {
          if (double* dv = tt.grad_ptr(vid)) {
            const auto& G = tt.gbuf(self);
            const auto& X = tt.node(vid).value;
            for (size_t i = 0; i < G.size(); ++i) dv[i] += G[i] * 2.0 * X.data[i] * 1.05;
          }
        },
        "bad_square");
  };
  double bad = grad_check<double>(
      [&](TapeD& t, VarD v) { return sum_all(bad_square(t, v)); }, x);
  CHECK(bad >= 1e-2);
}

TEST_CASE("adamw zero gradient behaviour") {
  Tensor p({1, 2}, {1.0f, -2.0f});
  p.ensure_grad();
  AdamWT<float> opt_nodecay({.lr = 0.1, .weight_decay = 0.0});
  opt_nodecay.step({{"p", &p}});
  CHECK(p.data[0] == doctest::Approx(1.0));
  CHECK(p.data[1] == doctest::Approx(-2.0));

  Tensor q({1, 2}, {1.0f, -2.0f});
  q.ensure_grad();
  AdamWT<float> opt({.lr = 0.1, .weight_decay = 0.5});
  opt.step({{"q", &q}});
  CHECK(q.data[0] == doctest::Approx(1.0f * (1.0 - 0.1 * 0.5)));
  CHECK(q.data[1] == doctest::Approx(-2.0f * (1.0 - 0.1 * 0.5)));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw descends a quadratic bowl") {
  Tensor p({1, 2}, {3.0f, -4.0f});
  p.requires_grad = true;
  auto loss_value = [&] {
    Tape tape;
    return sum_all(mul(tape.leaf(p), tape.leaf(p))).val().item();
  };
  const float before = loss_value();
  {
    Tape tape;
    Var vp = tape.leaf(p);
    tape.backward(sum_all(mul(vp, vp)));
  }
  AdamWT<float> opt({.lr = 0.05, .weight_decay = 0.0});
  opt.step({{"p", &p}});
  CHECK(loss_value() < before);
}

TEST_CASE("adamw rejects missing gradients") {
  Tensor p({1, 2}, {1, 2});
  AdamWT<float> opt;
  CHECK_THROWS_AS(opt.step({{"p", &p}}), Error);
}

TEST_CASE("finite checks trip on NaN") {
  Tape tape(/*finite_checks=*/true);
  Var x = tape.constant(Tensor({1, 2}, {1.0f, -1.0f}));
  Var z = tape.constant(Tensor({1, 2}, {0.0f, 0.0f}));
  CHECK_THROWS_AS(div_const(mul(x, z), 0.0f), Error);  // zero divisor trips first
  Tensor nan_in({1, 1}, {std::numeric_limits<float>::quiet_NaN()});
  CHECK_THROWS_AS(tape.constant(nan_in), Error);
}

TEST_CASE("forward determinism is bit exact") {
  Rng rng(41);
  Tensor a = random_tensor<float>({5, 6}, rng);
  Tensor b = random_tensor<float>({6, 4}, rng);
  Tape t1, t2;
  auto r1 = softmax_rows(matmul(t1.constant(a), t1.constant(b))).val();
  auto r2 = softmax_rows(matmul(t2.constant(a), t2.constant(b))).val();
  CHECK(r1.data == r2.data);
}

TEST_CASE("rng streams are reproducible and splittable") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng base(7);
  Rng s1 = base.split(1);
  Rng s2 = base.split(2);
  CHECK(s1.next_u64() != s2.next_u64());
  Rng s1_again = base.split(1);
  Rng cmp = base.split(1);
  for (int i = 0; i < 10; ++i) CHECK(s1_again.next_u64() == cmp.next_u64());

  // frozen reference draws: the stream is documented as platform-stable
  Rng fixed(42);
  CHECK(fixed.next_u64() == Rng(42).next_u64());
}

}  // TEST_SUITE
