#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "semaug/seq2seq.hpp"

namespace semaug {

/// A decoded token sequence. `tokens` ends with EOS iff `finished`.
struct Hypothesis {
  std::vector<TokenId> tokens;
  bool finished = false;
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / length_penalty

  Sentence sentence() const {
    Sentence s(tokens.begin(), tokens.end());
    if (finished && !s.empty()) s.pop_back();
    return s;
  }
};

/// PAD and BOS are never emitted: zero them and renormalize.
std::vector<double> mask_reserved(std::span<const double> dist);
/// Index of the largest entry; the lowest index wins ties.
TokenId argmax(std::span<const double> dist);
/// ((5 + len) / 6)^alpha
double length_penalty(std::size_t len, double alpha);

/// Something that produces next-token distributions:
///   State initial();  std::vector<double> next(State&, TokenId prev);
template <typename S>
concept StepScorer = requires(S s, typename S::State st, TokenId t) {
  { s.initial() } -> std::same_as<typename S::State>;
  { s.next(st, t) } -> std::same_as<std::vector<double>>;
};

template <StepScorer S>
Hypothesis greedy_search(S& scorer, std::size_t max_len) {
  Hypothesis h;
  auto state = scorer.initial();
  TokenId prev = kBos;
  while (h.tokens.size() < max_len) {
    const std::vector<double> dist = mask_reserved(scorer.next(state, prev));
    prev = argmax(dist);
    h.tokens.push_back(prev);
    h.log_prob += std::log(dist[prev]);
    if (prev == kEos) {
      h.finished = true;
      break;
    }
  }
  h.score = h.log_prob;
  return h;
}

/// Keeps the `beam` best partial hypotheses by summed log-probability;
/// hypotheses emitting EOS retire. Stops once `beam` hypotheses finished,
/// none remain alive, or max_len tokens were emitted. Returns the finished
/// hypothesis with the best length-normalized score, or the best unfinished
/// one (finished == false) if nothing finished.
template <StepScorer S>
Hypothesis beam_search(S& scorer, std::size_t beam, double alpha, std::size_t max_len) {
  if (beam == 0) throw std::invalid_argument("beam_search: beam must be >= 1");
  struct Live {
    Hypothesis hyp;
    typename S::State state;
    TokenId prev;
  };
  struct Candidate {
    double log_prob;
    std::size_t parent;
    TokenId token;
  };
  std::vector<Live> live;
  live.push_back(Live{Hypothesis{}, scorer.initial(), kBos});
  std::vector<Hypothesis> finished;

  for (std::size_t step = 0; step < max_len && !live.empty() && finished.size() < beam; ++step) {
    std::vector<Candidate> cands;
    std::vector<std::vector<double>> dists;
    for (std::size_t i = 0; i < live.size(); ++i) {
      dists.push_back(mask_reserved(scorer.next(live[i].state, live[i].prev)));
      for (TokenId t = 0; t < dists.back().size(); ++t) {
        if (dists.back()[t] > 0.0) cands.push_back({live[i].hyp.log_prob + std::log(dists.back()[t]), i, t});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.log_prob > b.log_prob; });
    if (cands.size() > beam) cands.resize(beam);

    std::vector<Live> next;
    for (const Candidate& c : cands) {
      Hypothesis h = live[c.parent].hyp;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      h.score = h.log_prob / length_penalty(h.tokens.size(), alpha);
      if (c.token == kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back(Live{std::move(h), live[c.parent].state, c.token});
      }
    }
    live = std::move(next);
  }

  // Earliest-found hypothesis wins ties.
  auto best_of = [](const std::vector<Hypothesis>& hs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < hs.size(); ++i)
      if (hs[i].score > hs[best].score) best = i;
    return hs[best];
  };
  if (!finished.empty()) return best_of(finished);
  std::vector<Hypothesis> partial;
  for (auto& l : live) partial.push_back(l.hyp);
  if (partial.empty()) return Hypothesis{};
  return best_of(partial);
}

/// Adapts a model and a fixed memory to StepScorer.
struct ModelScorer {
  using State = DecoderCache;
  Seq2SeqModel& model;
  const HiddenStates& memory;

  State initial() { return model.start(memory); }
  std::vector<double> next(State& s, TokenId prev) { return model.decode_step(prev, s, memory); }
};

Hypothesis greedy_decode(Seq2SeqModel& model, const HiddenStates& memory, std::size_t max_len);
Hypothesis greedy_decode(Seq2SeqModel& model, const Sentence& x, std::size_t max_len);
Hypothesis beam_decode(Seq2SeqModel& model, const HiddenStates& memory, std::size_t beam, double alpha,
                       std::size_t max_len);
Hypothesis beam_decode(Seq2SeqModel& model, const Sentence& x, std::size_t beam, double alpha, std::size_t max_len);

}  // namespace semaug
