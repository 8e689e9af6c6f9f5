#include "semaug/seq2seq.hpp"

#include <cmath>
#include <stdexcept>

#include "semaug/rng.hpp"

namespace semaug {
namespace {

constexpr double kMaskedScore = -1e9;

std::string layer(const char* stack, std::size_t i) { return std::string(stack) + "." + std::to_string(i) + "."; }

void add_linear(ParameterStore& ps, Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
  ps.add(name + ".w", rng.normal_tensor({in, out}, 1.0 / std::sqrt(static_cast<double>(in))));
  ps.add(name + ".b", Tensor(Shape{out}, 0.0));
}

void add_norm(ParameterStore& ps, const std::string& name, std::size_t d) {
  ps.add(name + ".g", Tensor(Shape{d}, 1.0));
  ps.add(name + ".b", Tensor(Shape{d}, 0.0));
}

void add_attention(ParameterStore& ps, Rng& rng, const std::string& name, std::size_t d) {
  for (const char* w : {"q", "k", "v", "o"}) add_linear(ps, rng, name + "." + w, d, d);
}

Tensor append_row(const Tensor& m, const Tensor& row) {
  const std::size_t cols = row.cols();
  std::vector<double> data = m.size() ? m.storage() : std::vector<double>{};
  data.insert(data.end(), row.data().begin(), row.data().end());
  const std::size_t rows = data.size() / cols;
  return Tensor(Shape{rows, cols}, std::move(data));
}

}  // namespace

Tensor positional_encoding(std::size_t first_position, std::size_t rows, std::size_t d_model) {
  Tensor pe(Shape{rows, d_model});
  for (std::size_t r = 0; r < rows; ++r) {
    const double pos = static_cast<double>(first_position + r);
    for (std::size_t i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model));
      pe[r * d_model + i] = (i % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.d_model == 0 || cfg.n_heads == 0 || cfg.d_model % cfg.n_heads != 0) {
    throw std::invalid_argument("model: d_model must be a positive multiple of n_heads");
  }
  if (cfg.src_vocab <= kNumReserved || cfg.tgt_vocab <= kNumReserved) {
    throw std::invalid_argument("model: vocabularies must contain tokens beyond the reserved ids");
  }
  const std::size_t d = cfg.d_model;
  Rng rng(seed);
  params_.add("src_embed", rng.normal_tensor({cfg.src_vocab, d}, 1.0 / std::sqrt(static_cast<double>(d))));
  params_.add("tgt_embed", rng.normal_tensor({cfg.tgt_vocab, d}, 1.0 / std::sqrt(static_cast<double>(d))));
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    const std::string l = layer("enc", i);
    add_norm(params_, l + "ln1", d);
    add_attention(params_, rng, l + "self", d);
    add_norm(params_, l + "ln2", d);
    add_linear(params_, rng, l + "ff1", d, cfg.d_ff);
    add_linear(params_, rng, l + "ff2", cfg.d_ff, d);
  }
  add_norm(params_, "enc.ln", d);
  for (std::size_t i = 0; i < cfg.dec_layers; ++i) {
    const std::string l = layer("dec", i);
    add_norm(params_, l + "ln1", d);
    add_attention(params_, rng, l + "self", d);
    add_norm(params_, l + "ln2", d);
    add_attention(params_, rng, l + "cross", d);
    add_norm(params_, l + "ln3", d);
    add_linear(params_, rng, l + "ff1", d, cfg.d_ff);
    add_linear(params_, rng, l + "ff2", cfg.d_ff, d);
  }
  add_norm(params_, "dec.ln", d);
  add_linear(params_, rng, "out", d, cfg.tgt_vocab);
}

Var Seq2SeqModel::norm(Graph& g, const std::string& prefix, Var x) {
  return layer_norm(x, g.param(p(prefix + ".g")), g.param(p(prefix + ".b")));
}

Var Seq2SeqModel::embed(Graph& g, const std::string& table, std::span<const TokenId> ids, std::size_t first_position) {
  Var e = embedding(g.param(p(table)), ids);
  return add(scale(e, std::sqrt(static_cast<double>(cfg_.d_model))),
             g.constant(positional_encoding(first_position, ids.size(), cfg_.d_model)));
}

Var Seq2SeqModel::feed_forward(Graph& g, const std::string& prefix, Var x) {
  Var h = relu(add(matmul(x, g.param(p(prefix + "ff1.w"))), g.param(p(prefix + "ff1.b"))));
  return add(matmul(h, g.param(p(prefix + "ff2.w"))), g.param(p(prefix + "ff2.b")));
}

Var Seq2SeqModel::attend_heads(Var q, Var k, Var v, std::optional<Var> mask) {
  const std::size_t dh = cfg_.d_model / cfg_.n_heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> heads;
  heads.reserve(cfg_.n_heads);
  for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
    Var qh = slice(q, 1, h * dh, (h + 1) * dh);
    Var kh = slice(k, 1, h * dh, (h + 1) * dh);
    Var vh = slice(v, 1, h * dh, (h + 1) * dh);
    Var scores = scale(matmul(qh, transpose(kh)), s);
    if (mask) scores = add(scores, *mask);
    heads.push_back(matmul(softmax(scores), vh));
  }
  return concat(heads, 1);
}

Var Seq2SeqModel::attention(Graph& g, const std::string& prefix, Var queries, Var keys_values, std::optional<Var> mask) {
  auto proj = [&](const char* w, Var x) {
    return add(matmul(x, g.param(p(prefix + "." + w + ".w"))), g.param(p(prefix + "." + w + ".b")));
  };
  Var ctx = attend_heads(proj("q", queries), proj("k", keys_values), proj("v", keys_values), mask);
  return proj("o", ctx);
}

Var Seq2SeqModel::encode(Graph& g, const Sentence& x) {
  validate_sentence(x, cfg_.src_vocab, "encode");
  Var h = embed(g, "src_embed", x, 0);
  for (std::size_t i = 0; i < cfg_.enc_layers; ++i) {
    const std::string l = layer("enc", i);
    Var a = norm(g, l + "ln1", h);
    h = add(h, attention(g, l + "self", a, a, std::nullopt));
    h = add(h, feed_forward(g, l, norm(g, l + "ln2", h)));
  }
  return norm(g, "enc.ln", h);
}

Var Seq2SeqModel::decoder_logits(Graph& g, Var memory, const Sentence& y) {
  validate_sentence(y, cfg_.tgt_vocab, "decode");
  if (memory.value().rank() != 2 || memory.value().cols() != cfg_.d_model) {
    throw ShapeError("decode", "memory " + shape_string(memory.shape()) + " for d_model " + std::to_string(cfg_.d_model));
  }
  std::vector<TokenId> in;
  in.reserve(y.size() + 1);
  in.push_back(kBos);
  in.insert(in.end(), y.begin(), y.end());
  const std::size_t t = in.size();
  Tensor causal(Shape{t, t}, 0.0);
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t c = r + 1; c < t; ++c) causal[r * t + c] = kMaskedScore;
  Var mask = g.constant(std::move(causal));

  Var h = embed(g, "tgt_embed", in, 0);
  for (std::size_t i = 0; i < cfg_.dec_layers; ++i) {
    const std::string l = layer("dec", i);
    Var a = norm(g, l + "ln1", h);
    h = add(h, attention(g, l + "self", a, a, mask));
    h = add(h, attention(g, l + "cross", norm(g, l + "ln2", h), memory, std::nullopt));
    h = add(h, feed_forward(g, l, norm(g, l + "ln3", h)));
  }
  return add(matmul(norm(g, "dec.ln", h), g.param(p("out.w"))), g.param(p("out.b")));
}

Var Seq2SeqModel::nll(Graph& g, Var memory, const Sentence& y, double label_smoothing) {
  Var logits = decoder_logits(g, memory, y);
  std::vector<std::size_t> targets(y.begin(), y.end());
  targets.push_back(kEos);
  return cross_entropy(logits, targets, label_smoothing);
}

DecoderCache Seq2SeqModel::start(const HiddenStates& memory) {
  if (memory.rank() != 2 || memory.cols() != cfg_.d_model || memory.rows() == 0) {
    throw ShapeError("decode_step", "memory " + shape_string(memory.shape()) + " for d_model " + std::to_string(cfg_.d_model));
  }
  DecoderCache cache;
  cache.memory_rows = memory.rows();
  cache.self_k.resize(cfg_.dec_layers);
  cache.self_v.resize(cfg_.dec_layers);
  Graph g(false);
  Var mem = g.constant(memory);
  for (std::size_t i = 0; i < cfg_.dec_layers; ++i) {
    const std::string l = layer("dec", i) + "cross.";
    cache.cross_k.push_back(add(matmul(mem, g.param(p(l + "k.w"))), g.param(p(l + "k.b"))).value());
    cache.cross_v.push_back(add(matmul(mem, g.param(p(l + "v.w"))), g.param(p(l + "v.b"))).value());
  }
  return cache;
}

std::vector<double> Seq2SeqModel::decode_step(TokenId prev_token, DecoderCache& cache, const HiddenStates& memory) {
  if (cache.cross_k.size() != cfg_.dec_layers || cache.memory_rows != memory.rows()) {
    throw std::invalid_argument("decode_step: cache was not started for this memory");
  }
  if (cache.fed.empty() ? prev_token != kBos : prev_token == kBos) {
    throw std::invalid_argument("decode_step: BOS must be fed exactly once, first");
  }
  if (prev_token >= cfg_.tgt_vocab) throw std::invalid_argument("decode_step: token id out of range");

  Graph g(false);
  const std::size_t pos = cache.fed.size();
  const TokenId ids[1] = {prev_token};
  Var h = embed(g, "tgt_embed", ids, pos);
  for (std::size_t i = 0; i < cfg_.dec_layers; ++i) {
    const std::string l = layer("dec", i);
    auto proj = [&](const std::string& w, Var x) {
      return add(matmul(x, g.param(p(l + w + ".w"))), g.param(p(l + w + ".b")));
    };
    Var a = norm(g, l + "ln1", h);
    cache.self_k[i] = append_row(cache.self_k[i], proj("self.k", a).value());
    cache.self_v[i] = append_row(cache.self_v[i], proj("self.v", a).value());
    Var ctx = attend_heads(proj("self.q", a), g.constant(cache.self_k[i]), g.constant(cache.self_v[i]), std::nullopt);
    h = add(h, proj("self.o", ctx));
    Var q = proj("cross.q", norm(g, l + "ln2", h));
    Var cross = attend_heads(q, g.constant(cache.cross_k[i]), g.constant(cache.cross_v[i]), std::nullopt);
    h = add(h, proj("cross.o", cross));
    h = add(h, feed_forward(g, l, norm(g, l + "ln3", h)));
  }
  Var probs = softmax(add(matmul(norm(g, "dec.ln", h), g.param(p("out.w"))), g.param(p("out.b"))));
  cache.fed.push_back(prev_token);
  return probs.value().storage();
}

NamedTensors Seq2SeqModel::state() const {
  NamedTensors out;
  out.emplace_back("meta.model",
                   Tensor::vector({static_cast<double>(cfg_.src_vocab), static_cast<double>(cfg_.tgt_vocab),
                                   static_cast<double>(cfg_.d_model), static_cast<double>(cfg_.n_heads),
                                   static_cast<double>(cfg_.enc_layers), static_cast<double>(cfg_.dec_layers),
                                   static_cast<double>(cfg_.d_ff)}));
  for (const Parameter* prm : params_.all()) out.emplace_back("model." + prm->name, prm->value);
  return out;
}

Seq2SeqModel Seq2SeqModel::from_state(const NamedTensors& tensors) {
  const Tensor* meta = nullptr;
  for (const auto& [name, t] : tensors)
    if (name == "meta.model") meta = &t;
  if (!meta || meta->size() != 7) throw CheckpointError("checkpoint has no model configuration");
  auto dim = [&](std::size_t i) { return static_cast<std::size_t>((*meta)[i]); };
  ModelConfig cfg{dim(0), dim(1), dim(2), dim(3), dim(4), dim(5), dim(6)};
  Seq2SeqModel model(cfg, 0);
  NamedTensors stripped;
  for (const auto& [name, t] : tensors)
    if (name.rfind("model.", 0) == 0) stripped.emplace_back(name.substr(6), t);
  restore(model.params_, stripped);
  return model;
}

HiddenStates encode_memory(Seq2SeqModel& model, const Sentence& x) {
  Graph g(false);
  return model.encode(g, x).value();
}

double log_likelihood(Seq2SeqModel& model, const Sentence& x, const Sentence& y,
                      const std::optional<HiddenStates>& memory_override) {
  Graph g(false);
  Var memory = memory_override ? g.constant(*memory_override) : model.encode(g, x);
  return -model.nll(g, memory, y).value().item();
}

}  // namespace semaug
