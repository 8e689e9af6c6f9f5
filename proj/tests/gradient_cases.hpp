#pragma once

#include <functional>
#include <map>
#include <string>

#include "semaug/graph.hpp"
#include "semaug/rng.hpp"

// Gradient-check cases shared by the unit tests and the acceptance run.
namespace semaug::testing {

// Weighted readout so no coordinate of the gradient is identically zero.
inline Var readout(Graph& g, Var v, std::uint64_t seed) {
  Rng rng(seed);
  Var w = g.constant(rng.uniform_tensor(v.shape(), 0.5, 1.5));
  return sum(mul(v, w));
}

struct OpCase {
  Shape shape;
  double lo, hi;
  std::function<Var(Graph&, Var)> build;
};

inline std::map<std::string, OpCase> op_cases() {
  std::map<std::string, OpCase> cases;
  cases["matmul"] = {{3, 4}, -1, 1, [](Graph& g, Var x) {
                       Var w = g.constant(Rng(7).normal_tensor({4, 2}));
                       return matmul(x, w);
                     }};
  cases["matmul_right"] = {{4, 2}, -1, 1, [](Graph& g, Var x) {
                             Var a = g.constant(Rng(8).normal_tensor({3, 4}));
                             return matmul(a, x);
                           }};
  cases["transpose"] = {{2, 3}, -1, 1, [](Graph&, Var x) { return transpose(x); }};
  cases["add"] = {{2, 3}, -1, 1, [](Graph& g, Var x) { return add(x, g.constant(Rng(1).normal_tensor({2, 3}))); }};
  cases["add_bias"] = {{3}, -1, 1, [](Graph& g, Var b) { return add(g.constant(Rng(2).normal_tensor({4, 3})), b); }};
  cases["sub"] = {{2, 3}, -1, 1, [](Graph& g, Var x) { return sub(g.constant(Rng(1).normal_tensor({2, 3})), x); }};
  cases["multiply"] = {{2, 3}, -1, 1, [](Graph& g, Var x) { return mul(x, x); }};
  cases["concatenate"] = {{2, 3}, -1, 1, [](Graph& g, Var x) {
                            Var c = g.constant(Rng(3).normal_tensor({2, 2}));
                            return concat({c, x, scale(x, 2.0)}, 1);
                          }};
  cases["concatenate_rows"] = {{2, 3}, -1, 1, [](Graph& g, Var x) {
                                 Var c = g.constant(Rng(3).normal_tensor({1, 3}));
                                 return concat({x, c, x}, 0);
                               }};
  cases["slice"] = {{4, 5}, -1, 1, [](Graph&, Var x) { return slice(slice(x, 0, 1, 3), 1, 2, 5); }};
  cases["tile_rows"] = {{1, 3}, -1, 1, [](Graph&, Var x) { return tile_rows(x, 4); }};
  cases["relu"] = {{3, 4}, -1, 1, [](Graph&, Var x) { return relu(x); }};
  cases["sigmoid"] = {{3, 4}, -3, 3, [](Graph&, Var x) { return sigmoid(x); }};
  cases["tanh"] = {{3, 4}, -2, 2, [](Graph&, Var x) { return tanh(x); }};
  cases["exp"] = {{3, 4}, -2, 2, [](Graph&, Var x) { return exp(x); }};
  cases["log"] = {{3, 4}, 0.5, 2.0, [](Graph&, Var x) { return log(x); }};
  cases["softmax"] = {{3, 5}, -2, 2, [](Graph&, Var x) { return softmax(x); }};
  cases["layer_norm"] = {{3, 6}, -2, 2, [](Graph&, Var x) { return layer_norm(x); }};
  cases["layer_norm_affine"] = {{3, 6}, -2, 2, [](Graph& g, Var x) {
                                  Var gain = g.input(Rng(4).uniform_tensor({6}, 0.5, 1.5));
                                  Var shift = g.input(Rng(5).normal_tensor({6}));
                                  return layer_norm(x, gain, shift);
                                }};
  cases["layer_norm_gain"] = {{6}, 0.5, 1.5, [](Graph& g, Var gain) {
                                Var x = g.constant(Rng(6).normal_tensor({3, 6}));
                                return layer_norm(x, gain, g.constant(Rng(9).normal_tensor({6})));
                              }};
  cases["conv1d_input"] = {{6, 3}, -1, 1, [](Graph& g, Var x) {
                             Var k = g.constant(Rng(10).normal_tensor({9, 4}));
                             Var b = g.constant(Rng(11).normal_tensor({4}));
                             return conv1d(x, k, b, 3);
                           }};
  cases["conv1d_kernel"] = {{6, 4}, -1, 1, [](Graph& g, Var k) {
                              Var x = g.constant(Rng(12).normal_tensor({5, 3}));
                              Var b = g.constant(Rng(13).normal_tensor({4}));
                              return conv1d(x, k, b, 2);
                            }};
  cases["conv1d_bias"] = {{4}, -1, 1, [](Graph& g, Var b) {
                            Var x = g.constant(Rng(14).normal_tensor({5, 3}));
                            Var k = g.constant(Rng(15).normal_tensor({6, 4}));
                            return relu(conv1d(x, k, b, 2));
                          }};
  cases["max_over_time"] = {{5, 4}, -1, 1, [](Graph&, Var x) { return max_over_time(x); }};
  cases["embedding"] = {{6, 3}, -1, 1, [](Graph&, Var table) {
                          const std::vector<std::size_t> ids{4, 1, 4, 0};
                          return embedding(table, ids);
                        }};
  cases["cross_entropy"] = {{3, 5}, -2, 2, [](Graph&, Var logits) {
                              const std::vector<std::size_t> t{1, 4, 0};
                              return cross_entropy(logits, t, 0.1);
                            }};
  cases["cross_entropy_dist"] = {{2, 4}, -2, 2, [](Graph&, Var logits) {
                                   Tensor q = Tensor::matrix(2, 4, {0.1, 0.2, 0.3, 0.4, 0.7, 0.1, 0.1, 0.1});
                                   return cross_entropy(logits, q);
                                 }};
  cases["scale"] = {{2, 3}, -1, 1, [](Graph&, Var x) { return scale(x, -1.7); }};
  cases["add_scalar"] = {{2, 3}, -1, 1, [](Graph&, Var x) { return mul(add_scalar(x, 0.4), x); }};
  cases["reshape"] = {{2, 6}, -1, 1, [](Graph& g, Var x) {
                        Var w = g.constant(Rng(16).normal_tensor({4, 2}));
                        return matmul(reshape(x, {3, 4}), w);
                      }};
  cases["mean"] = {{3, 4}, -1, 1, [](Graph&, Var x) { return scale(mean(mul(x, x)), 3.0); }};
  return cases;
}


}  // namespace semaug::testing
