#include "semaug/sampler.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "semaug/decode.hpp"

namespace semaug {

using ordered_json = nlohmann::ordered_json;

void SamplerConfig::validate() const {
  if (!(hbar >= 0.0)) throw std::invalid_argument("sampler: hbar must be >= 0");
  if (n_samples == 0) throw std::invalid_argument("sampler: num-samples must be >= 1");
  if (max_len == 0) throw std::invalid_argument("sampler: max_len must be >= 1");
}

double entropy(std::span<const double> dist, EntropyBase base) {
  double total = 0.0, h = 0.0;
  for (double p : dist) {
    if (p < 0.0 || !std::isfinite(p)) throw std::invalid_argument("entropy: negative or non-finite probability");
    total += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("entropy: distribution does not sum to 1");
  return base == EntropyBase::bits ? h / std::log(2.0) : h;
}

TokenId multinomial(std::span<const double> dist, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  TokenId last = 0;
  for (TokenId i = 0; i < dist.size(); ++i) {
    if (dist[i] <= 0.0) continue;
    acc += dist[i];
    last = i;
    if (u < acc) return i;
  }
  return last;  // rounding left u above the final cumulative sum
}

TokenId controllable_step(std::span<const double> dist, double hbar, Rng& rng, EntropyBase base) {
  if (entropy(dist, base) >= hbar) return multinomial(dist, rng);
  return argmax(dist);
}

SampledSentence sample_sentence(Seq2SeqModel& reverse_model, const HiddenStates& memory, double hbar,
                                std::size_t max_len, Rng& rng, EntropyBase base) {
  SampledSentence out;
  out.truncated = true;
  DecoderCache cache = reverse_model.start(memory);
  TokenId prev = kBos;
  for (std::size_t step = 0; step < max_len; ++step) {
    std::vector<double> dist = reverse_model.decode_step(prev, cache, memory);
    if (step == 0) dist[kEos] = 0.0;
    dist = mask_reserved(dist);
    prev = controllable_step(dist, hbar, rng, base);
    out.log_prob += std::log(dist[prev]);
    if (prev == kEos) {
      out.truncated = false;
      break;
    }
    out.tokens.push_back(prev);
  }
  return out;
}

SyntheticRecord synthesize_sources(Seq2SeqModel& reverse_model, const Sentence& y, const SamplerConfig& cfg,
                                   std::size_t record_index) {
  cfg.validate();
  SyntheticRecord rec;
  rec.target = y;
  const HiddenStates memory = encode_memory(reverse_model, y);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    const std::uint64_t seed = derive_seed(cfg.seed, record_index, i);
    Rng rng(seed);
    SampledSentence s = sample_sentence(reverse_model, memory, cfg.hbar, cfg.max_len, rng, cfg.base);
    rec.synthetic_sources.push_back(std::move(s.tokens));
    rec.seeds.push_back(seed);
    rec.truncated.push_back(s.truncated);
  }
  return rec;
}

std::vector<SyntheticRecord> synthesize_corpus(Seq2SeqModel& reverse_model, const std::vector<Sentence>& targets,
                                               const std::vector<Sentence>& real_sources, const SamplerConfig& cfg) {
  cfg.validate();
  if (!real_sources.empty() && real_sources.size() != targets.size()) {
    throw std::invalid_argument("synthesize: " + std::to_string(real_sources.size()) + " real sources for " +
                                std::to_string(targets.size()) + " targets");
  }
  std::vector<SyntheticRecord> out(targets.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(targets.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = synthesize_sources(reverse_model, targets[k], cfg, k);
    if (!real_sources.empty()) out[k].real_source = real_sources[k];
  }
  return out;
}

namespace {

ordered_json words(const Sentence& s, const Vocab& v) { return v.decode(s); }

Sentence ids(const ordered_json& j, const Vocab& v) { return v.encode(j.get<std::vector<std::string>>()); }

}  // namespace

std::string record_to_json(const SyntheticRecord& record, const Vocab& src_vocab, const Vocab& tgt_vocab) {
  ordered_json j;
  j["target"] = words(record.target, tgt_vocab);
  j["real_source"] = record.real_source ? words(*record.real_source, src_vocab) : ordered_json(nullptr);
  ordered_json syn = ordered_json::array();
  for (const Sentence& s : record.synthetic_sources) syn.push_back(words(s, src_vocab));
  j["synthetic_sources"] = std::move(syn);
  j["seed"] = record.seeds;
  j["truncated"] = record.truncated;
  return j.dump();
}

SyntheticRecord record_from_json(const std::string& line, const Vocab& src_vocab, const Vocab& tgt_vocab) {
  const ordered_json j = ordered_json::parse(line);
  for (const char* key : {"target", "real_source", "synthetic_sources", "seed", "truncated"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("synthetic record lacks field '") + key + "'");
  }
  SyntheticRecord rec;
  rec.target = ids(j["target"], tgt_vocab);
  if (!j["real_source"].is_null()) rec.real_source = ids(j["real_source"], src_vocab);
  for (const auto& s : j["synthetic_sources"]) rec.synthetic_sources.push_back(ids(s, src_vocab));
  rec.seeds = j["seed"].get<std::vector<std::uint64_t>>();
  rec.truncated = j["truncated"].get<std::vector<bool>>();
  if (rec.seeds.size() != rec.synthetic_sources.size() || rec.truncated.size() != rec.synthetic_sources.size()) {
    throw std::invalid_argument("synthetic record: seed/truncated counts differ from synthetic_sources");
  }
  return rec;
}

void save_synthetic(const std::filesystem::path& path, const std::vector<SyntheticRecord>& records,
                    const Vocab& src_vocab, const Vocab& tgt_vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << record_to_json(r, src_vocab, tgt_vocab) << '\n';
}

std::vector<SyntheticRecord> load_synthetic(const std::filesystem::path& path, const Vocab& src_vocab,
                                            const Vocab& tgt_vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<SyntheticRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(line, src_vocab, tgt_vocab));
    } catch (const std::exception& e) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace semaug
