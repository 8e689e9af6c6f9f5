#include "semaug/scn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace semaug {
namespace {

std::string conv_name(std::size_t window) { return "conv." + std::to_string(window); }

Tensor as_vector(const Tensor& row) { return row.reshaped(Shape{row.size()}); }

}  // namespace

std::size_t ScnConfig::max_window() const noexcept {
  return windows.empty() ? 0 : *std::max_element(windows.begin(), windows.end());
}

Scn::Scn(const ScnConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.d_model == 0 || cfg.n_maps == 0 || cfg.windows.empty()) {
    throw std::invalid_argument("scn: d_model, n_maps and windows must be non-empty");
  }
  for (std::size_t l : cfg.windows)
    if (l == 0) throw std::invalid_argument("scn: window sizes must be positive");
  const std::size_t d = cfg.d_model;
  Rng rng(seed);
  auto normal = [&](std::size_t in, std::size_t out) {
    return rng.normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in)));
  };
  for (std::size_t l : cfg.windows) {
    params_.add(conv_name(l) + ".w", normal(l * d, cfg.n_maps));
    params_.add(conv_name(l) + ".b", Tensor(Shape{cfg.n_maps}, 0.0));
  }
  params_.add("mu.w", normal(cfg.pooled_size(), d));
  params_.add("mu.b", Tensor(Shape{d}, 0.0));
  params_.add("sigma.w", normal(cfg.pooled_size(), d));
  params_.add("sigma.b", Tensor(Shape{d}, 0.0));
  params_.add("gate.z", normal(d, d));
  params_.add("gate.x", normal(d, d));
  params_.add("gate.b", Tensor(Shape{d}, cfg.gate_bias_init));
  params_.add("ln.g", Tensor(Shape{d}, 1.0));
  params_.add("ln.b", Tensor(Shape{d}, 0.0));
}

Var Scn::summarize(Graph& g, Var H, std::optional<std::size_t> length) {
  const Tensor& h = H.value();
  if (h.rank() != 2 || h.cols() != cfg_.d_model) {
    throw ShapeError("summarize", "hidden states " + shape_string(h.shape()) + " for d_model " +
                                      std::to_string(cfg_.d_model));
  }
  std::size_t rows = h.rows();
  if (length) {
    if (*length == 0 || *length > rows) throw ShapeError("summarize", "length outside [1, rows]");
    if (*length < rows) H = slice(H, 0, 0, *length);
    rows = *length;
  }
  std::vector<Var> pooled;
  for (std::size_t l : cfg_.windows) {
    Var x = H;
    if (rows < l) x = concat({H, g.constant(Tensor(Shape{l - rows, cfg_.d_model}, 0.0))}, 0);
    Var c = conv1d(x, g.param(p(conv_name(l) + ".w")), g.param(p(conv_name(l) + ".b")), l);
    pooled.push_back(max_over_time(relu(c)));
  }
  return concat(pooled, 1);
}

std::pair<Var, Var> Scn::gaussian_heads(Graph& g, Var pooled) {
  if (pooled.value().size() != cfg_.pooled_size()) {
    throw ShapeError("gaussian_heads", "pooled length " + std::to_string(pooled.value().size()) + ", heads expect " +
                                           std::to_string(cfg_.pooled_size()));
  }
  Var row = reshape(pooled, Shape{1, cfg_.pooled_size()});
  Var mu = add(matmul(row, g.param(p("mu.w"))), g.param(p("mu.b")));
  Var log_var = add(matmul(row, g.param(p("sigma.w"))), g.param(p("sigma.b")));
  return {mu, log_var};
}

Var Scn::sample_latent(Graph& g, Var mu, Var log_var, LatentMode mode, Rng* rng) {
  if (mu.shape() != log_var.shape()) throw ShapeError("sample_latent", "mu and log_var differ in shape");
  if (mode == LatentMode::deterministic) return mu;
  if (!rng) throw std::invalid_argument("sample_latent: stochastic mode needs an rng");
  Tensor eps = rng->normal_tensor(mu.shape());
  return add(mu, mul(exp(scale(log_var, 0.5)), g.constant(std::move(eps))));
}

Var Scn::fuse(Graph& g, Var z, Var H) {
  const std::size_t d = cfg_.d_model;
  if (z.value().size() != d || H.value().rank() != 2 || H.value().cols() != d) {
    throw ShapeError("fuse", "z " + shape_string(z.shape()) + " with H " + shape_string(H.shape()) + ", d_model " +
                                 std::to_string(d));
  }
  Var zr = reshape(z, Shape{1, d});
  const std::size_t T = H.value().rows();
  Var pre = add(add(matmul(H, g.param(p("gate.x"))), matmul(zr, g.param(p("gate.z")))), g.param(p("gate.b")));
  Var gate = sigmoid(pre);
  Var mixed = add(H, mul(gate, sub(tile_rows(zr, T), H)));
  return layer_norm(mixed, g.param(p("ln.g")), g.param(p("ln.b")));
}

LatentVars Scn::latent(Graph& g, Var H, LatentMode mode, Rng* rng) {
  Var pooled = summarize(g, H);
  auto [mu, log_var] = gaussian_heads(g, pooled);
  return {pooled, mu, log_var, sample_latent(g, mu, log_var, mode, rng)};
}

NamedTensors Scn::state() const {
  NamedTensors out;
  std::vector<double> meta{static_cast<double>(cfg_.d_model), static_cast<double>(cfg_.n_maps), cfg_.gate_bias_init};
  for (std::size_t l : cfg_.windows) meta.push_back(static_cast<double>(l));
  out.emplace_back("meta.scn", Tensor::vector(meta));
  for (const Parameter* prm : params_.all()) out.emplace_back("scn." + prm->name, prm->value);
  return out;
}

Scn Scn::from_state(const NamedTensors& tensors) {
  const Tensor* meta = nullptr;
  for (const auto& [name, t] : tensors)
    if (name == "meta.scn") meta = &t;
  if (!meta || meta->size() < 4) throw CheckpointError("checkpoint has no SCN configuration");
  ScnConfig cfg;
  cfg.d_model = static_cast<std::size_t>((*meta)[0]);
  cfg.n_maps = static_cast<std::size_t>((*meta)[1]);
  cfg.gate_bias_init = (*meta)[2];
  cfg.windows.clear();
  for (std::size_t i = 3; i < meta->size(); ++i) cfg.windows.push_back(static_cast<std::size_t>((*meta)[i]));
  Scn scn(cfg, 0);
  NamedTensors stripped;
  for (const auto& [name, t] : tensors)
    if (name.rfind("scn.", 0) == 0) stripped.emplace_back(name.substr(4), t);
  restore(scn.params_, stripped);
  return scn;
}

Var kl_divergence(Var mu_bar, Var log_var_bar, Var mu, Var log_var) {
  if (mu_bar.shape() != mu.shape() || log_var_bar.shape() != log_var.shape() || mu.shape() != log_var.shape()) {
    throw ShapeError("kl_divergence", "dimension mismatch between " + shape_string(mu_bar.shape()) + " and " +
                                          shape_string(mu.shape()));
  }
  Var diff = sub(mu_bar, mu);
  Var spread = add(exp(log_var_bar), mul(diff, diff));
  Var terms = add(scale(sub(log_var, log_var_bar), 0.5), scale(mul(spread, exp(scale(log_var, -1.0))), 0.5));
  return add_scalar(sum(terms), -0.5 * static_cast<double>(mu.value().size()));
}

double kl_divergence(const Gaussian& q_bar, const Gaussian& q) {
  const std::size_t n = q.mu.size();
  if (q_bar.mu.size() != n || q_bar.log_var.size() != n || q.log_var.size() != n) {
    throw ShapeError("kl_divergence", "dimension mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = q_bar.mu[i] - q.mu[i];
    kl += 0.5 * (q.log_var[i] - q_bar.log_var[i]) +
          (std::exp(q_bar.log_var[i]) + diff * diff) / (2.0 * std::exp(q.log_var[i])) - 0.5;
  }
  return kl;
}

SemanticState infer_semantics(Seq2SeqModel& model, Scn& scn, const Sentence& x, LatentMode mode, Rng* rng) {
  Graph g(false);
  LatentVars lv = scn.latent(g, model.encode(g, x), mode, rng);
  return {as_vector(lv.mu.value()), as_vector(lv.log_var.value()), as_vector(lv.z.value()),
          as_vector(lv.pooled.value())};
}

HiddenStates fused_memory(Seq2SeqModel& model, Scn& scn, const Sentence& x, LatentMode mode, Rng* rng) {
  Graph g(false);
  Var H = model.encode(g, x);
  return scn.fuse(g, scn.latent(g, H, mode, rng).z, H).value();
}

}  // namespace semaug
