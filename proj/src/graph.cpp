#include "semaug/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include "semaug/kernels.hpp"

namespace semaug {

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, nullptr, false});
  return Var{this, nodes_.size() - 1};
}

Var Graph::input(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{"input", std::move(value), {}, {}, {}, nullptr, requires_grad && grad_enabled_});
  return Var{this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  nodes_.push_back(Node{"param", Tensor(), {}, {}, {}, &p, grad_enabled_});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var{this, nodes_.size() - 1};
}

Var Graph::push(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (std::size_t in : inputs) needs = needs || nodes_[in].requires_grad;
  }
  Node n{op, std::move(value), {}, {}, {}, nullptr, needs};
  if (needs) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor* Graph::grad_sink(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  const Tensor& v = n.param ? n.param->value : n.value;
  if (n.grad.size() != v.size()) n.grad = Tensor(v.shape(), 0.0);
  return &n.grad;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  const Tensor& val = value(v.id);
  if (n.grad.size() != val.size()) return Tensor(val.shape(), 0.0);
  return n.grad;
}

const Tensor& Graph::forward() const {
  if (nodes_.empty()) throw std::logic_error("forward: empty graph");
  return value(nodes_.size() - 1);
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw std::invalid_argument("backward: loss belongs to another graph");
  if (value(loss.id).size() != 1) {
    throw ShapeError("backward", "loss must be scalar, got " + shape_string(value(loss.id).shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  Tensor* seed = grad_sink(loss.id);
  if (!seed) return;
  (*seed)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      auto dst = n.param->grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

namespace {

Graph& same_graph(const char* op, Var a, Var b) {
  if (a.graph != b.graph || a.graph == nullptr) throw std::invalid_argument(std::string(op) + ": operands from different graphs");
  return *a.graph;
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(op, "expected a matrix, got " + shape_string(t.shape()));
}

bool is_row_of(const Tensor& row, const Tensor& m) {
  if (m.rank() != 2) return false;
  if (row.rank() == 1) return row.size() == m.cols();
  return row.rank() == 2 && row.rows() == 1 && row.cols() == m.cols();
}

template <typename Fwd, typename Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
  Graph& g = *a.graph;
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return g.push(op, std::move(out), {a.id}, [deriv](Graph& g, std::size_t self) {
    const std::size_t in = g.inputs(self)[0];
    Tensor* dx = g.grad_sink(in);
    if (!dx) return;
    const Tensor& x = g.value(in);
    const Tensor& y = g.value(self);
    const Tensor& dy = g.out_grad(self);
    for (std::size_t i = 0; i < x.size(); ++i) (*dx)[i] += dy[i] * deriv(x[i], y[i]);
  });
}

Var binary_elementwise(const char* op, Var a, Var b, double sign_b) {
  Graph& g = same_graph(op, a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() == y.shape()) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + sign_b * y[i];
    return g.push(op, std::move(out), {a.id, b.id}, [sign_b](Graph& g, std::size_t self) {
      const Tensor& dy = g.out_grad(self);
      if (Tensor* da = g.grad_sink(g.inputs(self)[0])) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*da)[i] += dy[i];
      }
      if (Tensor* db = g.grad_sink(g.inputs(self)[1])) {
        for (std::size_t i = 0; i < dy.size(); ++i) (*db)[i] += sign_b * dy[i];
      }
    });
  }
  if (!is_row_of(y, x)) {
    throw ShapeError(op, shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  }
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + sign_b * y[c];
  return g.push(op, std::move(out), {a.id, b.id}, [sign_b, rows, cols](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    if (Tensor* da = g.grad_sink(g.inputs(self)[0])) {
      for (std::size_t i = 0; i < dy.size(); ++i) (*da)[i] += dy[i];
    }
    if (Tensor* db = g.grad_sink(g.inputs(self)[1])) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) (*db)[c] += sign_b * dy[r * cols + c];
    }
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph("matmul", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_rank2("matmul", x);
  require_rank2("matmul", y);
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul", shape_string(x.shape()) + " x " + shape_string(y.shape()));
  }
  const kernels::GemmDims d{x.rows(), x.cols(), y.cols()};
  Tensor out(Shape{d.m, d.n});
  kernels::gemm(d, x.data().data(), false, y.data().data(), false, out.data().data(), false);
  return g.push("matmul", std::move(out), {a.id, b.id}, [d](Graph& g, std::size_t self) {
    const auto& in = g.inputs(self);
    const double* dy = g.out_grad(self).data().data();
    if (Tensor* da = g.grad_sink(in[0])) {
      // dA (m x k) += dY (m x n) * B^T
      kernels::gemm({d.m, d.n, d.k}, dy, false, g.value(in[1]).data().data(), true, da->data().data(), true);
    }
    if (Tensor* db = g.grad_sink(in[1])) {
      // dB (k x n) += A^T * dY
      kernels::gemm({d.k, d.m, d.n}, g.value(in[0]).data().data(), true, dy, false, db->data().data(), true);
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  require_rank2("transpose", x);
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return a.graph->push("transpose", std::move(out), {a.id}, [r, c](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(g.inputs(self)[0]);
    if (!dx) return;
    const Tensor& dy = g.out_grad(self);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*dx)[i * c + j] += dy[j * r + i];
  });
}

Var add(Var a, Var b) { return binary_elementwise("add", a, b, 1.0); }
Var sub(Var a, Var b) { return binary_elementwise("sub", a, b, -1.0); }

Var mul(Var a, Var b) {
  Graph& g = same_graph("mul", a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) throw ShapeError("mul", shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return g.push("mul", std::move(out), {a.id, b.id}, [](Graph& g, std::size_t self) {
    const auto& in = g.inputs(self);
    const Tensor& dy = g.out_grad(self);
    if (Tensor* da = g.grad_sink(in[0])) {
      const Tensor& y = g.value(in[1]);
      for (std::size_t i = 0; i < dy.size(); ++i) (*da)[i] += dy[i] * y[i];
    }
    if (Tensor* db = g.grad_sink(in[1])) {
      const Tensor& x = g.value(in[0]);
      for (std::size_t i = 0; i < dy.size(); ++i) (*db)[i] += dy[i] * x[i];
    }
  });
}

Var scale(Var a, double s) {
  return unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.graph->push("reshape", std::move(out), {a.id}, [](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(g.inputs(self)[0]);
    if (!dx) return;
    const Tensor& dy = g.out_grad(self);
    for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[i] += dy[i];
  });
}

Var tile_rows(Var row, std::size_t n) {
  const Tensor& x = row.value();
  if (!(x.rank() == 1 || (x.rank() == 2 && x.rows() == 1))) {
    throw ShapeError("tile_rows", "expected a single row, got " + shape_string(x.shape()));
  }
  const std::size_t c = x.size();
  Tensor out(Shape{n, c});
  for (std::size_t r = 0; r < n; ++r) std::copy(x.data().begin(), x.data().end(), out.data().begin() + r * c);
  return row.graph->push("tile_rows", std::move(out), {row.id}, [n, c](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(g.inputs(self)[0]);
    if (!dx) return;
    const Tensor& dy = g.out_grad(self);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t j = 0; j < c; ++j) (*dx)[j] += dy[r * c + j];
  });
}

Var concat(std::initializer_list<Var> parts, std::size_t axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  Graph& g = *parts[0].graph;
  const Tensor& first = parts[0].value();
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  for (Var p : parts) {
    if (p.graph != &g) throw std::invalid_argument("concat: operands from different graphs");
    ids.push_back(p.id);
  }

  if (first.rank() == 1) {
    if (axis != 0) throw ShapeError("concat", "rank-1 operands only concatenate along axis 0");
    std::vector<double> data;
    std::vector<std::size_t> sizes;
    for (Var p : parts) {
      if (p.value().rank() != 1) throw ShapeError("concat", "mixed ranks");
      data.insert(data.end(), p.value().data().begin(), p.value().data().end());
      sizes.push_back(p.value().size());
    }
    Tensor out = Tensor::vector(std::move(data));
    return g.push("concat", std::move(out), std::move(ids), [sizes](Graph& g, std::size_t self) {
      const Tensor& dy = g.out_grad(self);
      std::size_t off = 0;
      for (std::size_t k = 0; k < sizes.size(); ++k) {
        if (Tensor* dx = g.grad_sink(g.inputs(self)[k])) {
          for (std::size_t i = 0; i < sizes[k]; ++i) (*dx)[i] += dy[off + i];
        }
        off += sizes[k];
      }
    });
  }

  require_rank2("concat", first);
  if (axis > 1) throw ShapeError("concat", "axis must be 0 or 1");
  std::vector<std::size_t> extents;  // rows (axis 0) or cols (axis 1) per part
  std::size_t total = 0;
  for (Var p : parts) {
    const Tensor& t = p.value();
    require_rank2("concat", t);
    const bool ok = axis == 0 ? t.cols() == first.cols() : t.rows() == first.rows();
    if (!ok) throw ShapeError("concat", shape_string(first.shape()) + " vs " + shape_string(t.shape()));
    extents.push_back(axis == 0 ? t.rows() : t.cols());
    total += extents.back();
  }
  const std::size_t rows = axis == 0 ? total : first.rows();
  const std::size_t cols = axis == 0 ? first.cols() : total;
  Tensor out(Shape{rows, cols});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& t = parts[k].value();
    for (std::size_t r = 0; r < t.rows(); ++r)
      for (std::size_t c = 0; c < t.cols(); ++c) {
        const std::size_t orow = axis == 0 ? off + r : r;
        const std::size_t ocol = axis == 0 ? c : off + c;
        out[orow * cols + ocol] = t[r * t.cols() + c];
      }
    off += extents[k];
  }
  return g.push("concat", std::move(out), std::move(ids), [extents, axis, cols](Graph& g, std::size_t self) {
    const Tensor& dy = g.out_grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < extents.size(); ++k) {
      const std::size_t in = g.inputs(self)[k];
      if (Tensor* dx = g.grad_sink(in)) {
        const std::size_t r_n = g.value(in).rows(), c_n = g.value(in).cols();
        for (std::size_t r = 0; r < r_n; ++r)
          for (std::size_t c = 0; c < c_n; ++c) {
            const std::size_t orow = axis == 0 ? off + r : r;
            const std::size_t ocol = axis == 0 ? c : off + c;
            (*dx)[r * c_n + c] += dy[orow * cols + ocol];
          }
      }
      off += extents[k];
    }
  });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (x.rank() == 1) {
    if (axis != 0 || begin > end || end > x.size()) throw ShapeError("slice", "bad range on " + shape_string(x.shape()));
    Tensor out = Tensor::vector(std::vector<double>(x.data().begin() + begin, x.data().begin() + end));
    return a.graph->push("slice", std::move(out), {a.id}, [begin](Graph& g, std::size_t self) {
      Tensor* dx = g.grad_sink(g.inputs(self)[0]);
      if (!dx) return;
      const Tensor& dy = g.out_grad(self);
      for (std::size_t i = 0; i < dy.size(); ++i) (*dx)[begin + i] += dy[i];
    });
  }
  require_rank2("slice", x);
  const std::size_t extent = axis == 0 ? x.rows() : x.cols();
  if (axis > 1 || begin > end || end > extent) {
    throw ShapeError("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) + ") on axis " +
                                  std::to_string(axis) + " of " + shape_string(x.shape()));
  }
  const std::size_t in_cols = x.cols();
  const std::size_t rows = axis == 0 ? end - begin : x.rows();
  const std::size_t cols = axis == 0 ? in_cols : end - begin;
  const std::size_t r0 = axis == 0 ? begin : 0, c0 = axis == 0 ? 0 : begin;
  Tensor out(Shape{rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[(r0 + r) * in_cols + c0 + c];
  return a.graph->push("slice", std::move(out), {a.id}, [=](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(g.inputs(self)[0]);
    if (!dx) return;
    const Tensor& dy = g.out_grad(self);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) (*dx)[(r0 + r) * in_cols + c0 + c] += dy[r * cols + c];
  });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  const Tensor& x = a.value();
  for (double v : x.data()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input");
  }
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  const std::size_t rows = x.rows(), cols = x.cols();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * cols;
    double* o = out.data().data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) o[c] /= z;
  }
  return a.graph->push("softmax", std::move(out), {a.id}, [rows, cols](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(g.inputs(self)[0]);
    if (!dx) return;
    const Tensor& y = g.value(self);
    const Tensor& dy = g.out_grad(self);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dy[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) (*dx)[r * cols + c] += y[r * cols + c] * (dy[r * cols + c] - dot);
    }
  });
}

Var layer_norm(Var x, std::optional<Var> gain, std::optional<Var> shift, double eps) {
  const Tensor& in = x.value();
  const std::size_t rows = in.rows(), cols = in.cols();
  if (gain && gain->value().size() != cols) throw ShapeError("layer_norm", "gain size mismatch");
  if (shift && shift->value().size() != cols) throw ShapeError("layer_norm", "shift size mismatch");

  auto normalized = std::make_shared<std::vector<double>>(in.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  Tensor out(in.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = in.data().data() + r * cols;
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += v[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (v[c] - mu) * (v[c] - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < cols; ++c) {
      const double n = (v[c] - mu) * is;
      (*normalized)[r * cols + c] = n;
      double y = n;
      if (gain) y *= gain->value()[c];
      if (shift) y += shift->value()[c];
      out[r * cols + c] = y;
    }
  }
  std::vector<std::size_t> ids{x.id};
  if (gain) ids.push_back(gain->id);
  if (shift) ids.push_back(shift->id);
  const bool has_gain = gain.has_value(), has_shift = shift.has_value();
  return x.graph->push("layer_norm", std::move(out), std::move(ids),
                       [=](Graph& g, std::size_t self) {
                         const auto& in = g.inputs(self);
                         const Tensor& dy = g.out_grad(self);
                         const double* gv = has_gain ? g.value(in[1]).data().data() : nullptr;
                         if (has_gain) {
                           if (Tensor* dg = g.grad_sink(in[1])) {
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c)
                                 (*dg)[c] += dy[r * cols + c] * (*normalized)[r * cols + c];
                           }
                         }
                         if (has_shift) {
                           if (Tensor* db = g.grad_sink(in[has_gain ? 2 : 1])) {
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c) (*db)[c] += dy[r * cols + c];
                           }
                         }
                         Tensor* dx = g.grad_sink(in[0]);
                         if (!dx) return;
                         const double n_inv = 1.0 / static_cast<double>(cols);
                         std::vector<double> dn(cols);
                         for (std::size_t r = 0; r < rows; ++r) {
                           double mean_dn = 0.0, mean_dn_n = 0.0;
                           for (std::size_t c = 0; c < cols; ++c) {
                             dn[c] = dy[r * cols + c] * (gv ? gv[c] : 1.0);
                             mean_dn += dn[c];
                             mean_dn_n += dn[c] * (*normalized)[r * cols + c];
                           }
                           mean_dn *= n_inv;
                           mean_dn_n *= n_inv;
                           for (std::size_t c = 0; c < cols; ++c) {
                             (*dx)[r * cols + c] +=
                                 (*inv_std)[r] * (dn[c] - mean_dn - (*normalized)[r * cols + c] * mean_dn_n);
                           }
                         }
                       });
}

Var conv1d(Var x, Var kernel, Var bias, std::size_t window) {
  Graph& g = same_graph("conv1d", x, kernel);
  const Tensor& in = x.value();
  const Tensor& k = kernel.value();
  const Tensor& b = bias.value();
  require_rank2("conv1d", in);
  require_rank2("conv1d", k);
  const std::size_t t = in.rows(), d = in.cols(), maps = k.cols();
  if (window == 0 || t < window) {
    throw ShapeError("conv1d", "sequence of " + std::to_string(t) + " rows shorter than window " + std::to_string(window));
  }
  if (k.rows() != window * d) {
    throw ShapeError("conv1d", "kernel " + shape_string(k.shape()) + " for window " + std::to_string(window) +
                                   " and width " + std::to_string(d));
  }
  if (b.size() != maps) throw ShapeError("conv1d", "bias size " + std::to_string(b.size()) + " != maps");
  const std::size_t positions = t - window + 1;
  // Row i of x is contiguous with row i+1, so window i is the flat slice [i*d, (i+window)*d).
  Tensor unfolded(Shape{positions, window * d});
  for (std::size_t i = 0; i < positions; ++i) {
    std::copy_n(in.data().begin() + i * d, window * d, unfolded.data().begin() + i * window * d);
  }
  Tensor out(Shape{positions, maps});
  kernels::gemm({positions, window * d, maps}, unfolded.data().data(), false, k.data().data(), false,
                out.data().data(), false);
  for (std::size_t i = 0; i < positions; ++i)
    for (std::size_t m = 0; m < maps; ++m) out[i * maps + m] += b[m];

  auto unf = std::make_shared<Tensor>(std::move(unfolded));
  return g.push("conv1d", std::move(out), {x.id, kernel.id, bias.id},
                [unf, positions, window, d, maps](Graph& g, std::size_t self) {
                  const auto& in = g.inputs(self);
                  const Tensor& dy = g.out_grad(self);
                  if (Tensor* dk = g.grad_sink(in[1])) {
                    kernels::gemm({window * d, positions, maps}, unf->data().data(), true, dy.data().data(), false,
                                  dk->data().data(), true);
                  }
                  if (Tensor* db = g.grad_sink(in[2])) {
                    for (std::size_t i = 0; i < positions; ++i)
                      for (std::size_t m = 0; m < maps; ++m) (*db)[m] += dy[i * maps + m];
                  }
                  if (Tensor* dx = g.grad_sink(in[0])) {
                    Tensor dunf(Shape{positions, window * d});
                    kernels::gemm({positions, maps, window * d}, dy.data().data(), false,
                                  g.value(in[1]).data().data(), true, dunf.data().data(), false);
                    for (std::size_t i = 0; i < positions; ++i)
                      for (std::size_t j = 0; j < window * d; ++j) (*dx)[i * d + j] += dunf[i * window * d + j];
                  }
                });
}

Var max_over_time(Var x) {
  const Tensor& in = x.value();
  require_rank2("max_over_time", in);
  const std::size_t t = in.rows(), cols = in.cols();
  if (t == 0) throw ShapeError("max_over_time", "empty sequence");
  std::vector<std::size_t> arg(cols, 0);
  Tensor out(Shape{1, cols});
  for (std::size_t c = 0; c < cols; ++c) {
    double best = in[c];
    for (std::size_t r = 1; r < t; ++r) {
      if (in[r * cols + c] > best) {
        best = in[r * cols + c];
        arg[c] = r;
      }
    }
    out[c] = best;
  }
  return x.graph->push("max_over_time", std::move(out), {x.id}, [arg, cols](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(g.inputs(self)[0]);
    if (!dx) return;
    const Tensor& dy = g.out_grad(self);
    for (std::size_t c = 0; c < cols; ++c) (*dx)[arg[c] * cols + c] += dy[c];
  });
}

Var embedding(Var table, std::span<const std::size_t> ids) {
  const Tensor& w = table.value();
  require_rank2("embedding", w);
  const std::size_t v = w.rows(), d = w.cols();
  Tensor out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw ShapeError("embedding", "id " + std::to_string(ids[i]) + " out of range for " + std::to_string(v) + " rows");
    }
    std::copy_n(w.data().begin() + ids[i] * d, d, out.data().begin() + i * d);
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return table.graph->push("embedding", std::move(out), {table.id}, [idv, d](Graph& g, std::size_t self) {
    Tensor* dw = g.grad_sink(g.inputs(self)[0]);
    if (!dw) return;
    const Tensor& dy = g.out_grad(self);
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) (*dw)[idv[i] * d + j] += dy[i * d + j];
  });
}

Var cross_entropy(Var logits, const Tensor& target) {
  const Tensor& z = logits.value();
  const std::size_t rows = z.rows(), cols = z.cols();
  if (target.size() != z.size()) {
    throw ShapeError("cross_entropy", shape_string(z.shape()) + " vs target " + shape_string(target.shape()));
  }
  auto probs = std::make_shared<std::vector<double>>(z.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = z.data().data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) {
      const double lp = in[c] - lse;
      (*probs)[r * cols + c] = std::exp(lp);
      const double q = target[r * cols + c];
      if (q != 0.0) loss -= q * lp;
    }
  }
  auto tgt = std::make_shared<Tensor>(target);
  return logits.graph->push("cross_entropy", Tensor::scalar(loss), {logits.id},
                            [probs, tgt, rows, cols](Graph& g, std::size_t self) {
                              Tensor* dz = g.grad_sink(g.inputs(self)[0]);
                              if (!dz) return;
                              const double up = g.out_grad(self)[0];
                              for (std::size_t r = 0; r < rows; ++r) {
                                double mass = 0.0;
                                for (std::size_t c = 0; c < cols; ++c) mass += (*tgt)[r * cols + c];
                                for (std::size_t c = 0; c < cols; ++c) {
                                  const std::size_t i = r * cols + c;
                                  (*dz)[i] += up * (mass * (*probs)[i] - (*tgt)[i]);
                                }
                              }
                            });
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets, double smoothing) {
  const Tensor& z = logits.value();
  const std::size_t rows = z.rows(), cols = z.cols();
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy", std::to_string(targets.size()) + " targets for " + std::to_string(rows) + " rows");
  }
  Tensor q(z.shape(), smoothing / static_cast<double>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) throw ShapeError("cross_entropy", "target id out of range");
    q[r * cols + targets[r]] += 1.0 - smoothing;
  }
  return cross_entropy(logits, q);
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return a.graph->push("sum", Tensor::scalar(s), {a.id}, [](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(g.inputs(self)[0]);
    if (!dx) return;
    const double up = g.out_grad(self)[0];
    for (double& v : dx->data()) v += up;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

double finite_difference_check(const std::function<Var(Graph&, Var)>& loss, const Tensor& point, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");
  Tensor analytic;
  {
    Graph g;
    Var leaf = g.input(point, true);
    Var out = loss(g, leaf);
    if (!std::isfinite(out.value().item())) throw std::domain_error("finite_difference_check: non-finite loss");
    g.backward(out);
    analytic = g.grad(leaf);
  }
  auto eval = [&](const Tensor& at) {
    Graph g(false);
    const double v = loss(g, g.input(at, false)).value().item();
    if (!std::isfinite(v)) throw std::domain_error("finite_difference_check: non-finite loss");
    return v;
  };
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double up = eval(probe);
    probe[i] = point[i] - step;
    const double down = eval(probe);
    probe[i] = point[i];
    const double numeric = (up - down) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + std::abs(numeric) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace semaug
