#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "semaug/tensor.hpp"

namespace semaug {

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Values are computed eagerly as nodes are appended, so
/// insertion order is a topological order and backward walks it in reverse.
/// A graph is single-threaded; distinct graphs share nothing.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is kept inside the graph (read it back with grad()).
  Var input(Tensor value, bool requires_grad = true);
  /// Leaf bound to a Parameter; backward() adds into p.grad. One leaf per parameter.
  /// The leaf reads p.value in place, so p must not be updated while the graph is in use.
  Var param(Parameter& p);

  const Tensor& value(Var v) const { return value(v.id); }
  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param ? n.param->value : n.value;
  }
  /// Gradient of the last backward() loss w.r.t. this node (zeros if unreached).
  Tensor grad(Var v) const;
  const char* op_name(Var v) const { return nodes_[v.id].op; }

  /// Value of the final node.
  const Tensor& forward() const;
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  bool grad_enabled() const noexcept { return grad_enabled_; }

  // Op-author interface.
  Var push(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
  /// Gradient buffer of an input, or nullptr when that input does not need one.
  Tensor* grad_sink(std::size_t id);

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  bool grad_enabled_;
  std::deque<Node> nodes_;  // deque: value references survive later pushes
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
};

inline constexpr double kLayerNormEps = 1e-7;

// Linear algebra and elementwise ops. Binary add/sub accept a second operand
// that is a single row (shape {c} or {1,c}) broadcast over the rows of the
// first; nothing else broadcasts.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var reshape(Var a, Shape shape);
/// Repeats a single row n times.
Var tile_rows(Var row, std::size_t n);
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
/// Half-open range [begin, end) along axis 0 or 1 of a rank-2 tensor (axis 0 for rank 1).
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);

Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);

/// Row-wise softmax over the last axis.
Var softmax(Var a);
/// Row-wise normalization to zero mean and unit variance, then optional gain/shift.
Var layer_norm(Var x, std::optional<Var> gain = std::nullopt, std::optional<Var> shift = std::nullopt,
               double eps = kLayerNormEps);

/// Valid 1-D convolution over the rows of x (T x d) with a kernel of shape
/// (window*d) x maps and bias {maps}; output (T-window+1) x maps.
Var conv1d(Var x, Var kernel, Var bias, std::size_t window);
/// Column-wise max over rows; output {1, cols}. Ties resolve to the lowest row.
Var max_over_time(Var x);
/// Rows of table (V x d) picked by ids.
Var embedding(Var table, std::span<const std::size_t> ids);

/// -sum_r sum_v target[r,v] * log_softmax(logits)[r,v]; target rows are distributions.
Var cross_entropy(Var logits, const Tensor& target);
/// Convenience form with one-hot targets mixed with a uniform distribution by `smoothing`.
Var cross_entropy(Var logits, std::span<const std::size_t> targets, double smoothing = 0.0);

Var sum(Var a);
Var mean(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

/// Builds loss(leaf) on fresh graphs and compares the reverse-mode gradient with
/// central differences. Returns max |a-n| / (|a|+|n|+1e-12) over coordinates.
double finite_difference_check(const std::function<Var(Graph&, Var)>& loss, const Tensor& point,
                               double step);

}  // namespace semaug
