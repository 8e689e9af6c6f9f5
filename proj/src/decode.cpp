#include "semaug/decode.hpp"

namespace semaug {

std::vector<double> mask_reserved(std::span<const double> dist) {
  std::vector<double> out(dist.begin(), dist.end());
  if (out.size() > kPad) out[kPad] = 0.0;
  if (out.size() > kBos) out[kBos] = 0.0;
  double total = 0.0;
  for (double p : out) total += p;
  if (!(total > 0.0)) throw std::domain_error("mask_reserved: no probability mass outside PAD/BOS");
  for (double& p : out) p /= total;
  return out;
}

TokenId argmax(std::span<const double> dist) {
  if (dist.empty()) throw std::invalid_argument("argmax: empty distribution");
  TokenId best = 0;
  for (TokenId i = 1; i < dist.size(); ++i)
    if (dist[i] > dist[best]) best = i;
  return best;
}

double length_penalty(std::size_t len, double alpha) {
  return std::pow((5.0 + static_cast<double>(len)) / 6.0, alpha);
}

Hypothesis greedy_decode(Seq2SeqModel& model, const HiddenStates& memory, std::size_t max_len) {
  ModelScorer scorer{model, memory};
  return greedy_search(scorer, max_len);
}

Hypothesis greedy_decode(Seq2SeqModel& model, const Sentence& x, std::size_t max_len) {
  return greedy_decode(model, encode_memory(model, x), max_len);
}

Hypothesis beam_decode(Seq2SeqModel& model, const HiddenStates& memory, std::size_t beam, double alpha,
                       std::size_t max_len) {
  ModelScorer scorer{model, memory};
  return beam_search(scorer, beam, alpha, max_len);
}

Hypothesis beam_decode(Seq2SeqModel& model, const Sentence& x, std::size_t beam, double alpha, std::size_t max_len) {
  return beam_decode(model, encode_memory(model, x), beam, alpha, max_len);
}

}  // namespace semaug
