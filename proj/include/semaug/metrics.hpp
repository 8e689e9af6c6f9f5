#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "semaug/sampler.hpp"

namespace semaug {

/// Token-level edit distance (insert, delete, substitute all cost 1).
template <typename T>
std::size_t levenshtein(std::span<const T> a, std::span<const T> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

template <typename T>
std::size_t levenshtein(const std::vector<T>& a, const std::vector<T>& b) {
  return levenshtein(std::span<const T>(a), std::span<const T>(b));
}

struct BleuStats {
  std::size_t hyp_len = 0, ref_len = 0;
  std::size_t matches[4] = {0, 0, 0, 0};
  std::size_t totals[4] = {0, 0, 0, 0};
};

template <typename T>
void accumulate_bleu(BleuStats& s, const std::vector<T>& hyp, const std::vector<T>& ref) {
  s.hyp_len += hyp.size();
  s.ref_len += ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<T>, std::size_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[std::vector<T>(ref.begin() + i, ref.begin() + i + n)];
    std::map<std::vector<T>, std::size_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[std::vector<T>(hyp.begin() + i, hyp.begin() + i + n)];
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      s.matches[n - 1] += std::min(c, it == ref_counts.end() ? 0 : it->second);
      s.totals[n - 1] += c;
    }
  }
}

/// 0-100. Zero unigram matches give 0; if any higher-order precision is zero
/// or undefined, all orders n > 1 use (matches + 1) / (total + 1).
double bleu_from_stats(const BleuStats& s);

template <typename T>
double corpus_bleu(const std::vector<std::vector<T>>& hyps, const std::vector<std::vector<T>>& refs) {
  if (hyps.size() != refs.size()) throw std::invalid_argument("corpus_bleu: hypothesis and reference counts differ");
  if (hyps.empty()) throw std::invalid_argument("corpus_bleu: empty corpus");
  BleuStats s;
  for (std::size_t i = 0; i < hyps.size(); ++i) accumulate_bleu(s, hyps[i], refs[i]);
  return bleu_from_stats(s);
}

struct DiversityReport {
  double mean_syn_vs_real = 0.0;
  double mean_syn_vs_syn = 0.0;
  double bleu_syn_doc = 0.0;
  std::size_t n_records = 0;
  double hbar = 0.0;

  std::string to_json() const;
  std::string to_table() const;
};

DiversityReport diversity_report(const std::vector<SyntheticRecord>& records, double hbar);

/// Text table with one row per report.
std::string diversity_table(const std::vector<DiversityReport>& reports);

struct PcaResult {
  std::vector<std::vector<double>> coords;      // one k-vector per input
  std::vector<std::vector<double>> components;  // k unit directions
  std::vector<double> eigenvalues;              // descending
};

/// Mean-centred projection on the top-k covariance directions, by power
/// iteration with deflation (tolerance 1e-10, at most 10000 iterations).
PcaResult pca_project(const std::vector<std::vector<double>>& latents, std::size_t k = 2, std::uint64_t seed = 0);

struct Separation {
  double intra_mean = 0.0, inter_mean = 0.0;
};

/// Mean pairwise Euclidean distance within groups and across groups.
Separation cluster_separation(const std::vector<std::vector<std::vector<double>>>& groups);

/// One row per vector: group id, then the entries.
void write_latents_csv(const std::filesystem::path& path, const std::vector<std::size_t>& group_ids,
                       const std::vector<std::vector<double>>& vectors);
void read_latents_csv(const std::filesystem::path& path, std::vector<std::size_t>& group_ids,
                      std::vector<std::vector<double>>& vectors);

}  // namespace semaug
