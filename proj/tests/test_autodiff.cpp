#include <doctest.h>

#include <cmath>

#include "meshgpt/gradcheck.hpp"
#include "meshgpt/tape.hpp"

using namespace meshgpt;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor<double> t2(std::initializer_list<double> v, Shape s) {
  return Tensor<double>::from(s, std::vector<double>(v));
}

}  // namespace

TEST_CASE("matmul against identity") {
  Tape<double> tp;
  Tensor<double> a = t2({1, 2, 3, 4}, {2, 2});
  Tensor<double> eye = t2({1, 0, 0, 1}, {2, 2});
  Tensor<double> c = ad::matmul(tp, a, eye);
  for (int i = 0; i < 4; ++i) CHECK(c[i] == a[i]);
}

TEST_CASE("relu forward") {
  Tape<double> tp;
  Tensor<double> x = t2({-1, 2}, {2});
  Tensor<double> y = ad::relu(tp, x);
  CHECK(y[0] == 0);
  CHECK(y[1] == 2);
}

TEST_CASE("conv1d same padding: ones signal, ones kernel") {
  Tape<double> tp;
  Tensor<double> x = Tensor<double>::full({5, 1}, 1.0);
  Tensor<double> w = Tensor<double>::full({3, 1, 1}, 1.0);
  Tensor<double> y = ad::conv1d(tp, x, w, ad::Pad::kSame);
  REQUIRE(y.shape == Shape{5, 1});
  CHECK(y[0] == 2);
  CHECK(y[1] == 3);
  CHECK(y[2] == 3);
  CHECK(y[3] == 3);
  CHECK(y[4] == 2);

  Tensor<double> yv = ad::conv1d(tp, x, w, ad::Pad::kValid);
  REQUIRE(yv.shape == Shape{3, 1});
  CHECK(yv[0] == 3);
}

TEST_CASE("cross entropy hand values") {
  Tape<double> tp;
  // logits (0,0), target class 0 -> ln 2
  Tensor<double> l1 = t2({0, 0}, {1, 2});
  CHECK(ad::softmax_cross_entropy(tp, l1, std::vector<int64_t>{0}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // dominant logit -> loss < 1e-6
  Tensor<double> l2 = t2({100, 0}, {1, 2});
  CHECK(ad::softmax_cross_entropy(tp, l2, std::vector<int64_t>{0}).item() < 1e-6);
  // uniform targets, uniform logits over K=4 -> ln 4
  Tensor<double> l3 = Tensor<double>::zeros({1, 4});
  Tensor<double> soft = Tensor<double>::full({1, 4}, 0.25);
  CHECK(ad::softmax_cross_entropy(tp, l3, soft).item() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects unnormalized soft targets") {
  Tape<double> tp;
  Tensor<double> logits = Tensor<double>::zeros({1, 3});
  Tensor<double> bad = Tensor<double>::full({1, 3}, 0.5);
  CHECK_THROWS_AS(ad::softmax_cross_entropy(tp, logits, bad), ad::TensorError);
}

TEST_CASE("backward: d(x^2)/dx = 2x") {
  Tape<double> tp;
  Tensor<double> x = Tensor<double>::scalar(3.0);
  Tensor<double> xt = tp.leaf(x);
  Tensor<double> y = ad::mul(tp, xt, xt);
  tp.backward(ad::sum(tp, y));
  CHECK(tp.grad(xt)[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: relu gate") {
  Tape<double> tp;
  Tensor<double> x = t2({-1, 2}, {2});
  Tensor<double> xt = tp.leaf(x);
  tp.backward(ad::sum(tp, ad::relu(tp, xt)));
  CHECK(tp.grad(xt)[0] == 0);
  CHECK(tp.grad(xt)[1] == 1);
}

TEST_CASE("backward rejects non-scalar root and off-tape root") {
  Tape<double> tp;
  Tensor<double> x = t2({1, 2}, {2});
  Tensor<double> xt = tp.leaf(x);
  Tensor<double> y = ad::relu(tp, xt);
  CHECK_THROWS_AS(tp.backward(y), ad::TensorError);
  CHECK_THROWS_AS(tp.backward(x), ad::TensorError);
}

TEST_CASE("gradients accumulate over fan-out, absent for unreachable leaves") {
  Tape<double> tp;
  Tensor<double> x = Tensor<double>::scalar(2.0);
  Tensor<double> unused = Tensor<double>::scalar(5.0);
  Tensor<double> xt = tp.leaf(x);
  Tensor<double> ut = tp.leaf(unused);
  Tensor<double> y = ad::add(tp, xt, xt);  // dy/dx = 2 via fan-out
  tp.backward(ad::sum(tp, y));
  CHECK(tp.grad(xt)[0] == doctest::Approx(2.0));
  CHECK(!tp.has_grad(ut));
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(17);
  CHECK(ad::grad_check_op("matmul", rng) < 1e-6);
}

TEST_CASE("layer_norm gradient within 1e-5") {
  Rng rng(18);
  CHECK(ad::grad_check_op("layer_norm", rng) < 1e-5);
}

TEST_CASE("relu probed away from the kink") {
  Rng rng(19);
  CHECK(ad::grad_check_op("relu", rng) < 1e-6);
}

TEST_CASE("softmax rows sum to one; layer_norm is standardized") {
  Rng rng(23);
  Tape<double> tp;
  Tensor<double> x({4, 7});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.normal() * 3;
  Tensor<double> sm = ad::softmax(tp, x, 1);
  for (int r = 0; r < 4; ++r) {
    double s = 0;
    for (int c = 0; c < 7; ++c) s += sm[r * 7 + c];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
  Tensor<double> ln = ad::layer_norm(tp, x);
  for (int r = 0; r < 4; ++r) {
    double mean = 0, var = 0;
    for (int c = 0; c < 7; ++c) mean += ln[r * 7 + c];
    mean /= 7;
    for (int c = 0; c < 7; ++c) var += (ln[r * 7 + c] - mean) * (ln[r * 7 + c] - mean);
    var /= 7;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("softmax over a non-terminal axis") {
  Tape<double> tp;
  Tensor<double> x = t2({1, 2, 3, 4, 5, 6}, {3, 2});
  Tensor<double> sm = ad::softmax(tp, x, 0);
  for (int c = 0; c < 2; ++c) {
    double s = 0;
    for (int r = 0; r < 3; ++r) s += sm[r * 2 + c];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("causal softmax zeroes the strict upper triangle") {
  Tape<double> tp;
  Tensor<double> x({3, 3});
  for (int i = 0; i < 9; ++i) x[i] = double(i);
  Tensor<double> y = ad::causal_softmax(tp, x);
  CHECK(y[0 * 3 + 0] == 1.0);
  CHECK(y[0 * 3 + 1] == 0.0);
  CHECK(y[0 * 3 + 2] == 0.0);
  CHECK(y[1 * 3 + 2] == 0.0);
  CHECK(std::abs(y[1 * 3 + 0] + y[1 * 3 + 1] - 1.0) < 1e-12);
}

TEST_CASE("broadcast add over leading dims; shape mismatch rejected") {
  Tape<double> tp;
  Tensor<double> a = Tensor<double>::full({2, 3}, 1.0);
  Tensor<double> b = t2({10, 20, 30}, {3});
  Tensor<double> c = ad::add(tp, a, b);
  CHECK(c[0] == 11);
  CHECK(c[5] == 31);
  Tensor<double> bad = Tensor<double>::zeros({2});
  CHECK_THROWS_AS(ad::add(tp, a, bad), ad::TensorError);
  CHECK_THROWS_AS(ad::matmul(tp, a, Tensor<double>::zeros({2, 2})), ad::TensorError);
}

TEST_CASE("op_forward rejects unknown kinds") {
  Tape<double> tp;
  CHECK_THROWS_AS(ad::op_forward(tp, "frobnicate", {Tensor<double>::zeros({2, 2})}),
                  ad::TensorError);
}

TEST_CASE("forward determinism: identical runs produce identical bits") {
  auto run = [] {
    Rng rng(77);
    Tape<double> tp;
    Tensor<double> a({8, 8}), b({8, 8});
    for (int64_t i = 0; i < 64; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    Tensor<double> y = ad::softmax(tp, ad::matmul(tp, a, b), 1);
    return y;
  };
  Tensor<double> y1 = run(), y2 = run();
  for (int64_t i = 0; i < y1.numel(); ++i) CHECK(y1[i] == y2[i]);
}

TEST_CASE("full op gradient sweep stays under the acceptance thresholds") {
  for (const ad::CheckResult& r : ad::run_grad_check_suite(123)) {
    INFO(r.name);
    CHECK(r.pass);
  }
}
