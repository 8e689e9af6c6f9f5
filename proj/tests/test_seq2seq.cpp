#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "doctest.h"
#include "semaug/decode.hpp"
#include "semaug/optimizer.hpp"
#include "semaug/rng.hpp"
#include "semaug/seq2seq.hpp"

using namespace semaug;

namespace {

ModelConfig small_config(std::size_t vocab = 12) {
  ModelConfig c;
  c.src_vocab = vocab;
  c.tgt_vocab = vocab;
  c.d_model = 32;
  c.n_heads = 4;
  c.enc_layers = 2;
  c.dec_layers = 2;
  c.d_ff = 64;
  return c;
}

Sentence random_sentence(Rng& rng, std::size_t len, std::size_t vocab) {
  Sentence s;
  for (std::size_t i = 0; i < len; ++i) s.push_back(kNumReserved + rng.index(vocab - kNumReserved));
  return s;
}

// Plain teacher-forced MLE on one pair, enough to memorize it.
void overfit(Seq2SeqModel& model, const Sentence& x, const Sentence& y, std::size_t steps) {
  AdamConfig cfg;
  auto params = model.params().all();
  AdamState state;
  for (std::size_t step = 1; step <= steps; ++step) {
    model.params().zero_grad();
    Graph g;
    Var loss = model.nll(g, model.encode(g, x), y);
    g.backward(loss);
    adam_step_lr(params, state, cfg, step, 3e-3);
  }
}

// Next-token distributions keyed by prefix; missing prefixes put all mass on EOS.
struct TableScorer {
  using State = std::vector<TokenId>;
  std::map<std::vector<TokenId>, std::vector<double>> table;
  std::size_t vocab;

  State initial() { return {}; }
  std::vector<double> next(State& s, TokenId prev) {
    if (prev != kBos) s.push_back(prev);
    auto it = table.find(s);
    if (it != table.end()) return it->second;
    std::vector<double> eos(vocab, 0.0);
    eos[kEos] = 1.0;
    return eos;
  }
};

std::vector<double> dist(std::initializer_list<std::pair<TokenId, double>> entries, std::size_t vocab) {
  std::vector<double> d(vocab, 0.0);
  for (auto [t, p] : entries) d[t] = p;
  return d;
}

}  // namespace

TEST_CASE("encode: shape, determinism and positional sensitivity") {
  Seq2SeqModel model(small_config(), 1);
  const Sentence x{4, 5, 6, 7, 8};
  const Tensor h1 = encode_memory(model, x);
  CHECK(h1.shape() == Shape{5, 32});
  CHECK(h1.all_finite());
  CHECK(encode_memory(model, x) == h1);
  const Tensor h2 = encode_memory(model, Sentence{5, 4, 6, 7, 8});
  CHECK(h2 != h1);
}

TEST_CASE("encode: rejects empty sentences, PAD and out-of-range ids") {
  Seq2SeqModel model(small_config(), 1);
  CHECK_THROWS_AS(encode_memory(model, Sentence{}), std::invalid_argument);
  CHECK_THROWS_AS(encode_memory(model, Sentence{4, kPad, 5}), std::invalid_argument);
  CHECK_THROWS_AS(encode_memory(model, Sentence{4, 99}), std::invalid_argument);
}

TEST_CASE("decode_step: proper, deterministic distributions") {
  Seq2SeqModel model(small_config(), 2);
  const HiddenStates memory = encode_memory(model, Sentence{4, 5, 6});
  DecoderCache a = model.start(memory);
  DecoderCache b = model.start(memory);
  for (TokenId prev : {kBos, TokenId{7}, TokenId{9}}) {
    const auto pa = model.decode_step(prev, a, memory);
    const auto pb = model.decode_step(prev, b, memory);
    CHECK(pa == pb);
    CHECK(pa.size() == 12);
    double s = 0.0;
    for (double p : pa) {
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      s += p;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("decode_step: cache/step mismatches are errors") {
  Seq2SeqModel model(small_config(), 2);
  const HiddenStates memory = encode_memory(model, Sentence{4, 5, 6});
  DecoderCache cache = model.start(memory);
  CHECK_THROWS_AS(model.decode_step(5, cache, memory), std::invalid_argument);  // BOS must come first
  model.decode_step(kBos, cache, memory);
  CHECK_THROWS_AS(model.decode_step(kBos, cache, memory), std::invalid_argument);
  const HiddenStates other = encode_memory(model, Sentence{4, 5});
  CHECK_THROWS_AS(model.decode_step(5, cache, other), std::invalid_argument);
}

TEST_CASE("log_likelihood: uniform output layer over V=8") {
  Seq2SeqModel model(small_config(8), 3);
  model.params().get("out.w").value.fill(0.0);
  model.params().get("out.b").value.fill(0.0);
  // three words plus the closing EOS make four predictions
  const double ll = log_likelihood(model, Sentence{4, 5, 6}, Sentence{5, 6, 7});
  CHECK(ll == doctest::Approx(4.0 * std::log(1.0 / 8.0)).epsilon(1e-12));
  CHECK(ll == doctest::Approx(-8.3178).epsilon(1e-4));
}

TEST_CASE("log_likelihood equals the sum of step-wise decode log-probabilities") {
  Rng rng(4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Seq2SeqModel model(small_config(), seed);
    const Sentence x = random_sentence(rng, 4 + seed % 3, 12);
    const Sentence y = random_sentence(rng, 3 + seed % 4, 12);
    const HiddenStates memory = encode_memory(model, x);
    DecoderCache cache = model.start(memory);
    double oracle = 0.0;
    TokenId prev = kBos;
    for (std::size_t i = 0; i <= y.size(); ++i) {
      const TokenId next = i < y.size() ? y[i] : kEos;
      oracle += std::log(model.decode_step(prev, cache, memory)[next]);
      prev = next;
    }
    CHECK(log_likelihood(model, x, y) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(log_likelihood(model, x, y, memory) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(log_likelihood(model, x, y) <= 0.0);
  }
}

TEST_CASE("greedy_decode equals beam_decode with beam 1 and no length penalty") {
  Rng rng(5);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Seq2SeqModel model(small_config(), 100 + seed);
    const Sentence x = random_sentence(rng, 5, 12);
    const Hypothesis g = greedy_decode(model, x, 12);
    const Hypothesis b = beam_decode(model, x, 1, 0.0, 12);
    CHECK(g.tokens == b.tokens);
    CHECK(g.finished == b.finished);
  }
}

TEST_CASE("greedy_decode: max_len 1 yields exactly one token") {
  Seq2SeqModel model(small_config(), 6);
  CHECK(greedy_decode(model, Sentence{4, 5}, 1).tokens.size() == 1);
}

TEST_CASE("overfit on one pair: argmax reproduces the target") {
  Seq2SeqModel model(small_config(), 7);
  const Sentence x{4, 9, 6, 11, 5}, y{10, 7, 7, 8};
  overfit(model, x, y, 150);
  CHECK(log_likelihood(model, x, y) > -0.1);

  const HiddenStates memory = encode_memory(model, x);
  DecoderCache cache = model.start(memory);
  TokenId prev = kBos;
  for (std::size_t i = 0; i <= y.size(); ++i) {
    const TokenId expect = i < y.size() ? y[i] : kEos;
    CHECK(argmax(model.decode_step(prev, cache, memory)) == expect);
    prev = expect;
  }
  const Hypothesis g = greedy_decode(model, x, 10);
  CHECK(g.finished);
  CHECK(g.sentence() == y);
  CHECK(beam_decode(model, x, 4, 0.6, 10).sentence() == y);

  // teacher-forced likelihood is order-sensitive on a trained model
  CHECK(log_likelihood(model, x, Sentence{7, 10, 8, 7}) != log_likelihood(model, x, y));
}

TEST_CASE("shared parameters serve both source paths") {
  Seq2SeqModel model(small_config(), 8);
  const Sentence x{4, 5, 6, 7}, xbar{4, 6, 5, 7, 9}, y{8, 9};
  const Parameter& embed = model.params().get("src_embed");

  auto grad_of = [&](std::function<Var(Graph&)> build) {
    model.params().zero_grad();
    Graph g;
    g.backward(build(g));
    return model.params().get("enc.0.self.q.w").grad;
  };
  Graph g;
  Var hx = model.encode(g, x);
  const std::size_t leaf = g.param(model.params().get("src_embed")).id;
  Var hxb = model.encode(g, xbar);
  CHECK(g.param(model.params().get("src_embed")).id == leaf);
  CHECK(&g.value(Var{&g, leaf}) == &embed.value);
  (void)hx;
  (void)hxb;

  const Tensor both = grad_of([&](Graph& g) { return add(model.nll(g, model.encode(g, x), y), model.nll(g, model.encode(g, xbar), y)); });
  const Tensor gx = grad_of([&](Graph& g) { return model.nll(g, model.encode(g, x), y); });
  const Tensor gxb = grad_of([&](Graph& g) { return model.nll(g, model.encode(g, xbar), y); });
  for (std::size_t i = 0; i < both.size(); ++i) CHECK(both[i] == doctest::Approx(gx[i] + gxb[i]).epsilon(1e-10));
}

TEST_CASE("model state round-trips through the checkpoint container") {
  Seq2SeqModel model(small_config(), 9);
  Seq2SeqModel copy = Seq2SeqModel::from_state(decode_checkpoint(encode_checkpoint(model.state())));
  CHECK(copy.config() == model.config());
  const Sentence x{4, 5, 6}, y{7, 8};
  CHECK(log_likelihood(copy, x, y) == log_likelihood(model, x, y));
}

TEST_CASE("beam search on a hand-built table matches exhaustive enumeration") {
  // tokens: EOS=2, a=4, b=5, c=6
  const std::size_t V = 7;
  TableScorer s{{}, V};
  s.table[{}] = dist({{4, 0.5}, {5, 0.4}, {kEos, 0.1}}, V);
  s.table[{4}] = dist({{6, 0.3}, {5, 0.3}, {kEos, 0.4}}, V);
  s.table[{5}] = dist({{6, 0.9}, {kEos, 0.1}}, V);
  s.table[{4, 6}] = dist({{kEos, 0.6}, {4, 0.4}}, V);
  s.table[{4, 5}] = dist({{kEos, 0.5}, {6, 0.5}}, V);
  s.table[{5, 6}] = dist({{kEos, 0.95}, {5, 0.05}}, V);

  // Oracle: every EOS-terminated sequence of length <= 3 scored by summed log-probability.
  double best = -1e300;
  std::vector<TokenId> best_seq;
  std::function<void(std::vector<TokenId>, double)> walk = [&](std::vector<TokenId> prefix, double lp) {
    if (prefix.size() == 3) return;
    TableScorer::State st;
    TokenId prev = kBos;
    for (TokenId t : prefix) {
      s.next(st, prev);
      prev = t;
    }
    const auto d = s.next(st, prev);
    for (TokenId t = 0; t < V; ++t) {
      if (d[t] <= 0.0) continue;
      auto seq = prefix;
      seq.push_back(t);
      const double score = lp + std::log(d[t]);
      if (t == kEos) {
        if (score > best) {
          best = score;
          best_seq = seq;
        }
      } else {
        walk(seq, score);
      }
    }
  };
  walk({}, 0.0);
  REQUIRE(best_seq == std::vector<TokenId>{5, 6, kEos});  // 0.4*0.9*0.95 = 0.342

  const Hypothesis h = beam_search(s, 2, 0.0, 3);
  CHECK(h.finished);
  CHECK(h.tokens == best_seq);
  CHECK(h.log_prob == doctest::Approx(best).epsilon(1e-12));
  // greedy follows 'a' and misses it
  CHECK(greedy_search(s, 3).tokens == std::vector<TokenId>{4, kEos});
}

TEST_CASE("length penalty lets a longer hypothesis win") {
  const std::size_t V = 7;
  TableScorer s{{}, V};
  s.table[{}] = dist({{kEos, 0.45}, {4, 0.55}}, V);
  s.table[{4}] = dist({{5, 1.0}}, V);
  s.table[{4, 5}] = dist({{6, 0.8}, {kEos, 0.2}}, V);
  s.table[{4, 5, 6}] = dist({{kEos, 0.9}, {4, 0.1}}, V);
  const double raw_short = std::log(0.45);              // len 1
  const double raw_long = std::log(0.55 * 0.8 * 0.9);  // len 4
  REQUIRE(raw_short > raw_long);
  REQUIRE(raw_long / length_penalty(4, 1.0) > raw_short / length_penalty(1, 1.0));

  CHECK(beam_search(s, 3, 0.0, 6).tokens == std::vector<TokenId>{kEos});
  CHECK(beam_search(s, 3, 1.0, 6).tokens == std::vector<TokenId>{4, 5, 6, kEos});
}

TEST_CASE("beam search with nothing finished returns the best partial hypothesis, flagged") {
  const std::size_t V = 7;
  TableScorer s{{}, V};
  s.table[{}] = dist({{4, 0.7}, {5, 0.3}}, V);
  s.table[{4}] = dist({{4, 0.6}, {5, 0.4}}, V);
  s.table[{5}] = dist({{4, 1.0}}, V);
  const Hypothesis h = beam_search(s, 2, 0.0, 2);
  CHECK_FALSE(h.finished);
  CHECK(h.tokens == std::vector<TokenId>{4, 4});
}
