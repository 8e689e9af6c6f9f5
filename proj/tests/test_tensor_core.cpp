#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include "doctest.h"
#include "semaug/checkpoint.hpp"
#include "semaug/graph.hpp"
#include "semaug/kernels.hpp"
#include "semaug/rng.hpp"

#include "gradient_cases.hpp"

using namespace semaug;
using semaug::testing::op_cases;
using semaug::testing::readout;

TEST_CASE("forward: matmul against an identity-padded matrix") {
  Graph g;
  Var a = g.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  Var b = g.constant(Tensor::matrix(3, 2, {1, 0, 0, 1, 0, 0}));
  matmul(a, b);
  const Tensor& out = g.forward();
  CHECK(out.shape() == Shape{2, 2});
  CHECK(out.storage() == std::vector<double>{1, 2, 4, 5});
}

TEST_CASE("forward: relu and softmax") {
  Graph g;
  Var r = relu(g.constant(Tensor::vector({-1, 0, 2})));
  CHECK(r.value().storage() == std::vector<double>{0, 0, 2});
  softmax(g.constant(Tensor::vector({0, 0, 0, 0})));
  for (double p : g.forward().data()) CHECK(p == 0.25);
}

TEST_CASE("forward: shape mismatch names the op") {
  Graph g;
  Var a = g.constant(Tensor(Shape{2, 3}));
  Var b = g.constant(Tensor(Shape{2, 3}));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.op() == "matmul");
  }
  CHECK_THROWS_AS(mul(a, g.constant(Tensor(Shape{3, 2}))), ShapeError);
  CHECK_THROWS_AS(add(a, g.constant(Tensor(Shape{2}))), ShapeError);
  CHECK_THROWS_AS(conv1d(a, g.constant(Tensor(Shape{9, 2})), g.constant(Tensor(Shape{2})), 3), ShapeError);
}

TEST_CASE("backward: sum gives ones, half squared norm gives x") {
  Graph g;
  Var x = g.input(Rng(1).normal_tensor({2, 3}));
  g.backward(sum(x));
  const Tensor dx = g.grad(x);
  for (double v : dx.data()) CHECK(v == 1.0);

  Graph h;
  Var y = h.input(Tensor::vector({1, 2, 3}));
  h.backward(scale(sum(mul(y, y)), 0.5));
  CHECK(h.grad(y).storage() == std::vector<double>{1, 2, 3});
}

TEST_CASE("backward: non-scalar loss is rejected") {
  Graph g;
  Var x = g.input(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(g.backward(relu(x)), ShapeError);
}

TEST_CASE("backward: repeated use of a leaf sums gradients") {
  Graph g;
  Var x = g.input(Tensor::vector({3.0}));
  // d/dx (x*x + x) = 2x + 1
  g.backward(sum(add(mul(x, x), x)));
  CHECK(g.grad(x)[0] == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("backward: parameters accumulate across graphs") {
  Parameter p("w", Tensor::vector({1.0, -2.0}));
  for (int i = 0; i < 2; ++i) {
    Graph g;
    Var w = g.param(p);
    CHECK(g.param(p).id == w.id);
    g.backward(sum(mul(w, g.constant(Tensor::vector({3.0, 4.0})))));
  }
  CHECK(p.grad.storage() == std::vector<double>{6.0, 8.0});
}

TEST_CASE("finite_difference_check: quadratic is exact") {
  const double err = finite_difference_check([](Graph&, Var x) { return sum(mul(x, x)); }, Tensor::vector({3.0}), 1e-5);
  CHECK(err < 1e-8);
}

TEST_CASE("finite_difference_check: non-finite loss is an error") {
  CHECK_THROWS(finite_difference_check([](Graph&, Var x) { return sum(scale(exp(x), 1e308)); },
                                       Tensor::vector({10.0}), 1e-5));
}

TEST_CASE("finite_difference_check: layer norm then sum") {
  // A plain sum through layer_norm has an analytically zero gradient; weight it instead.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tensor x = Rng(seed).normal_tensor({4, 5});
    const double err = finite_difference_check([](Graph& g, Var v) { return readout(g, layer_norm(v), 99); }, x, 1e-5);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("every registered op passes the gradient check on 20 random inputs") {
  for (const auto& [name, c] : op_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Tensor x = Rng(1000 + seed).uniform_tensor(c.shape, c.lo, c.hi);
      worst = std::max(worst, finite_difference_check(
                                  [&](Graph& g, Var v) { return readout(g, c.build(g, v), 500 + seed); }, x, 1e-5));
    }
    INFO(name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("softmax rows sum to one and stay positive") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    Var p = softmax(g.constant(rng.normal_tensor({4, 9}, 20.0)));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (double v : p.value().row(r)) {
        CHECK(v > 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("layer_norm output statistics") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g;
    Var y = layer_norm(g.constant(rng.normal_tensor({3, 16}, 3.0)));
    for (std::size_t r = 0; r < 3; ++r) {
      double m = 0.0, v = 0.0;
      for (double x : y.value().row(r)) m += x;
      m /= 16;
      for (double x : y.value().row(r)) v += (x - m) * (x - m);
      v /= 16;
      CHECK(std::abs(m) < 1e-9);
      CHECK(std::abs(v - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("max_over_time routes gradient to the argmax, lowest index on ties") {
  Graph g;
  Var x = g.input(Tensor::matrix(4, 3, {1, 5, 2,  //
                                        3, 5, 2,  //
                                        0, 1, 2,  //
                                        3, 0, 1}));
  Var m = max_over_time(x);
  CHECK(m.value().storage() == std::vector<double>{3, 5, 2});
  g.backward(sum(mul(m, g.constant(Tensor::matrix(1, 3, {1, 2, 3})))));
  CHECK(g.grad(x).storage() == std::vector<double>{0, 2, 3,  //
                                                   1, 0, 0,  //
                                                   0, 0, 0,  //
                                                   0, 0, 0});
}

TEST_CASE("serial and parallel gemm agree bitwise") {
  Rng rng(5);
  for (auto [m, k, n] : {std::tuple{3, 4, 5}, {64, 64, 64}, {130, 70, 33}}) {
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb) {
        Tensor a = rng.normal_tensor({static_cast<std::size_t>(m * k)});
        Tensor b = rng.normal_tensor({static_cast<std::size_t>(k * n)});
        Tensor c1 = rng.normal_tensor({static_cast<std::size_t>(m * n)});
        Tensor c2 = c1;
        const kernels::GemmDims d{std::size_t(m), std::size_t(k), std::size_t(n)};
        kernels::serial::gemm(d, a.data().data(), ta, b.data().data(), tb, c1.data().data(), true);
        kernels::parallel::gemm(d, a.data().data(), ta, b.data().data(), tb, c2.data().data(), true);
        CHECK(c1 == c2);
      }
  }
}

TEST_CASE("serial gemm matches a naive triple loop") {
  Rng rng(6);
  const std::size_t m = 5, k = 7, n = 3;
  Tensor a = rng.normal_tensor({k, m});  // stored transposed
  Tensor b = rng.normal_tensor({k, n});
  Tensor c(Shape{m, n});
  kernels::serial::gemm({m, k, n}, a.data().data(), true, b.data().data(), false, c.data().data(), false);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
    }
}

TEST_CASE("checkpoint container round-trips and validates length") {
  Rng rng(9);
  NamedTensors in{{"enc.w", rng.normal_tensor({3, 4})}, {"scn.b_mu", rng.normal_tensor({5})}, {"s", Tensor::scalar(2.5)}};
  const std::string bytes = encode_checkpoint(in);
  // magic + version + count + per-tensor (len + name + rank + dims + values)
  CHECK(bytes.size() == 24 + (8 + 5 + 8 + 16 + 96) + (8 + 8 + 8 + 8 + 40) + (8 + 1 + 8 + 0 + 8));
  CHECK(bytes.substr(0, 8) == "SEMAUGCK");
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);
  NamedTensors out = decode_checkpoint(bytes);
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out[i].first == in[i].first);
    CHECK(out[i].second == in[i].second);
  }
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint("NOTACKPT" + bytes.substr(8)), CheckpointError);

  const auto path = std::filesystem::temp_directory_path() / "semaug_ckpt_test.bin";
  save_checkpoint(path, in);
  CHECK(load_checkpoint(path).size() == 3);
  std::filesystem::remove(path);
}

TEST_CASE("restore requires every parameter with matching shape") {
  ParameterStore store;
  store.add("a", Tensor(Shape{2}));
  store.add("b", Tensor(Shape{2, 2}));
  CHECK_THROWS_AS(restore(store, {{"a", Tensor(Shape{2}, 1.0)}}), CheckpointError);
  CHECK_THROWS_AS(restore(store, {{"a", Tensor(Shape{2}, 1.0)}, {"b", Tensor(Shape{4}, 1.0)}}), CheckpointError);
  restore(store, {{"b", Tensor(Shape{2, 2}, 2.0)}, {"a", Tensor(Shape{2}, 1.0)}});
  CHECK(store.get("a").value[1] == 1.0);
  CHECK(store.get("b").value[3] == 2.0);
}
