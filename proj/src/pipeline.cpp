#include "semaug/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace semaug {

std::size_t best_candidate(Seq2SeqModel& reverse_model, const Sentence& y, const std::vector<Sentence>& candidates,
                           std::vector<double>* scores) {
  if (candidates.empty()) throw std::invalid_argument("best_candidate: no candidates");
  std::vector<double> s(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) s[i] = log_likelihood(reverse_model, y, candidates[i]);
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] > s[best]) best = i;
  if (scores) *scores = std::move(s);
  return best;
}

std::vector<SyntheticRecord> augment_monolingual(Seq2SeqModel& reverse_model, const std::vector<Sentence>& targets,
                                                 const SamplerConfig& cfg) {
  std::vector<SyntheticRecord> records = synthesize_corpus(reverse_model, targets, {}, cfg);
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    SyntheticRecord& r = records[static_cast<std::size_t>(i)];
    r.real_source = r.synthetic_sources[best_candidate(reverse_model, r.target, r.synthetic_sources)];
  }
  return records;
}

// ---- toy corpora ----------------------------------------------------------

ToyKind parse_toy_kind(const std::string& name) {
  if (name == "paraphrase") return ToyKind::paraphrase;
  if (name == "clusters") return ToyKind::clusters;
  if (name == "copy") return ToyKind::copy;
  throw std::invalid_argument("unknown toy kind '" + name + "' (paraphrase, clusters, copy)");
}

const char* toy_kind_name(ToyKind kind) {
  switch (kind) {
    case ToyKind::paraphrase: return "paraphrase";
    case ToyKind::clusters: return "clusters";
    case ToyKind::copy: return "copy";
  }
  return "?";
}

namespace {

using Words = std::vector<std::string>;

constexpr std::size_t kFillers = 48;
constexpr double kReorder = 0.3;
constexpr std::array<double, 3> kSynonymWeights{0.6, 0.25, 0.15};
constexpr std::array<char, 4> kSlots{'S', 'V', 'O', 'P'};
constexpr std::array<std::size_t, 4> kParaphraseSlots{4, 4, 4, 3};

using Meaning = std::array<std::size_t, 4>;

std::string slot_word(char slot, std::size_t value) { return std::string(1, slot) + std::to_string(value); }

Words target_of(const Meaning& m) {
  Words w;
  for (std::size_t s = 0; s < 4; ++s) w.push_back(slot_word(kSlots[s], m[s]));
  return w;
}

std::string synonym(char slot, std::size_t value, Rng& rng) {
  double u = rng.uniform();
  std::size_t k = 0;
  while (k + 1 < kSynonymWeights.size() && u >= kSynonymWeights[k]) u -= kSynonymWeights[k++];
  std::string w = slot_word(static_cast<char>(slot - 'A' + 'a'), value);
  return w + static_cast<char>('a' + k);
}

// filler, then either S V O P or P S V O
Words realize(const Meaning& m, Rng& rng) {
  char filler[8];
  std::snprintf(filler, sizeof filler, "f%02zu", rng.index(kFillers));
  Words w{filler};
  Words body;
  for (std::size_t s = 0; s < 4; ++s) body.push_back(synonym(kSlots[s], m[s], rng));
  if (rng.uniform() < kReorder) std::rotate(body.begin(), body.begin() + 3, body.end());
  w.insert(w.end(), body.begin(), body.end());
  return w;
}

Meaning random_meaning(Rng& rng) {
  Meaning m;
  for (std::size_t s = 0; s < 4; ++s) m[s] = rng.index(kParaphraseSlots[s]);
  return m;
}

void add_pair(TextCorpus& c, Words src, Words tgt) {
  c.src.push_back(std::move(src));
  c.tgt.push_back(std::move(tgt));
}

ToyData paraphrase_toy(Rng& rng) {
  ToyData d;
  for (int i = 0; i < 600; ++i) {
    const Meaning m = random_meaning(rng);
    add_pair(d.train, realize(m, rng), target_of(m));
  }
  for (int i = 0; i < 100; ++i) {
    const Meaning m = random_meaning(rng);
    add_pair(d.test, realize(m, rng), target_of(m));
  }
  for (int i = 0; i < 200; ++i) d.mono.push_back(target_of(random_meaning(rng)));
  return d;
}

ToyData cluster_toy(Rng& rng) {
  // six meanings with pairwise distinct S, V and O (values 0..5)
  std::array<std::array<std::size_t, 6>, 3> perm;
  for (auto& p : perm) {
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), rng.engine());
  }
  std::vector<Meaning> meanings;
  for (std::size_t c = 0; c < 6; ++c) meanings.push_back({perm[0][c], perm[1][c], perm[2][c], rng.index(kParaphraseSlots[3])});
  ToyData d;
  for (const Meaning& m : meanings)
    for (int i = 0; i < 16; ++i) add_pair(d.train, realize(m, rng), target_of(m));
  for (const Meaning& m : meanings)
    for (int i = 0; i < 10; ++i) add_pair(d.test, realize(m, rng), target_of(m));
  return d;
}

// 32 targets, each paired with two independently spelled sources
ToyData copy_toy(Rng& rng) {
  auto target = [&rng] {
    Words tgt;
    const std::size_t len = 3 + rng.index(4);
    for (std::size_t i = 0; i < len; ++i) tgt.push_back("t" + std::to_string(rng.index(16)));
    return tgt;
  };
  auto spell = [&rng](const Words& tgt) {
    Words src;
    for (const auto& t : tgt) src.push_back(t + (rng.index(2) ? "b" : "a"));
    return src;
  };
  ToyData d;
  for (int i = 0; i < 32; ++i) {
    const Words t = target();
    for (int k = 0; k < 2; ++k) add_pair(d.train, spell(t), t);
  }
  for (int i = 0; i < 16; ++i) {
    const Words t = target();
    add_pair(d.test, spell(t), t);
  }
  return d;
}

}  // namespace

ToyData make_toy(ToyKind kind, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x544f59));
  switch (kind) {
    case ToyKind::paraphrase: return paraphrase_toy(rng);
    case ToyKind::clusters: return cluster_toy(rng);
    case ToyKind::copy: return copy_toy(rng);
  }
  throw std::invalid_argument("make_toy: bad kind");
}

std::vector<std::filesystem::path> write_toy(const ToyData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out{dir / "train.src", dir / "train.tgt", dir / "test.src", dir / "test.tgt"};
  save_parallel(out[0], out[1], data.train);
  save_parallel(out[2], out[3], data.test);
  if (!data.mono.empty()) {
    out.push_back(dir / "mono.tgt");
    write_lines(out.back(), data.mono);
  }
  return out;
}

// ---- manifest -------------------------------------------------------------

std::string sha1_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("sha1 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string git_blob_hash(const std::string& bytes) {
  std::string framed = "blob " + std::to_string(bytes.size());
  framed.push_back('\0');
  return sha1_hex(framed + bytes);
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return git_blob_hash(s.str());
}

Manifest Manifest::load(const std::filesystem::path& path) {
  Manifest m;
  if (!std::filesystem::exists(path)) return m;
  std::ifstream in(path, std::ios::binary);
  nlohmann::json j;
  try {
    in >> j;
    m.upsample_rate = j.value("upsample_rate", std::size_t{1});
    for (const auto& [cmd, e] : j.at("entries").items()) {
      ManifestEntry entry;
      entry.command = cmd;
      entry.config_hash = e.at("config_hash").get<std::string>();
      entry.seed = e.at("seed").get<std::uint64_t>();
      entry.inputs = e.at("inputs").get<std::map<std::string, std::string>>();
      entry.outputs = e.at("outputs").get<std::vector<std::string>>();
      entry.completed = e.at("completed").get<bool>();
      m.entries_[cmd] = std::move(entry);
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": malformed manifest: " + e.what());
  }
  return m;
}

void Manifest::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json j;
  j["upsample_rate"] = upsample_rate;
  j["entries"] = nlohmann::ordered_json::object();
  for (const auto& [cmd, e] : entries_) {
    nlohmann::ordered_json je;
    je["config_hash"] = e.config_hash;
    je["seed"] = e.seed;
    je["inputs"] = e.inputs;
    je["outputs"] = e.outputs;
    je["completed"] = e.completed;
    j["entries"][cmd] = std::move(je);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

const ManifestEntry* Manifest::find(const std::string& command) const {
  auto it = entries_.find(command);
  return it == entries_.end() ? nullptr : &it->second;
}

void Manifest::record(ManifestEntry entry) { entries_[entry.command] = std::move(entry); }

bool Manifest::up_to_date(const ManifestEntry& candidate) const {
  const ManifestEntry* old = find(candidate.command);
  if (!old || !old->completed) return false;
  if (old->config_hash != candidate.config_hash || old->seed != candidate.seed || old->inputs != candidate.inputs) {
    return false;
  }
  return std::all_of(old->outputs.begin(), old->outputs.end(),
                     [](const std::string& p) { return std::filesystem::exists(p); });
}

}  // namespace semaug
