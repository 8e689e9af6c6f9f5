#include "semaug/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace semaug {

double bleu_from_stats(const BleuStats& s) {
  if (s.matches[0] == 0 || s.hyp_len == 0) return 0.0;
  bool smooth = false;
  for (std::size_t n = 1; n < 4; ++n) smooth = smooth || s.matches[n] == 0;
  double log_p = std::log(static_cast<double>(s.matches[0]) / static_cast<double>(s.totals[0]));
  for (std::size_t n = 1; n < 4; ++n) {
    const double add = smooth ? 1.0 : 0.0;
    log_p += std::log((static_cast<double>(s.matches[n]) + add) / (static_cast<double>(s.totals[n]) + add));
  }
  const double c = static_cast<double>(s.hyp_len), r = static_cast<double>(s.ref_len);
  const double log_bp = c < r ? 1.0 - r / c : 0.0;
  return 100.0 * std::exp(log_bp + log_p / 4.0);
}

// ---- diversity ------------------------------------------------------------

DiversityReport diversity_report(const std::vector<SyntheticRecord>& records, double hbar) {
  if (records.empty()) throw std::invalid_argument("diversity_report: no records");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].real_source) {
      throw std::invalid_argument("diversity_report: record " + std::to_string(i) + " has no real source");
    }
    if (records[i].synthetic_sources.size() < 2) {
      throw std::invalid_argument("diversity_report: record " + std::to_string(i) + " has fewer than 2 synthetic sources");
    }
  }
  struct Partial {
    std::size_t real_sum = 0, real_pairs = 0, syn_sum = 0, syn_pairs = 0;
  };
  std::vector<Partial> parts(records.size());
  const auto n = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const SyntheticRecord& r = records[static_cast<std::size_t>(i)];
    Partial& p = parts[static_cast<std::size_t>(i)];
    const auto& syn = r.synthetic_sources;
    for (std::size_t a = 0; a < syn.size(); ++a) {
      p.real_sum += levenshtein(syn[a], *r.real_source);
      ++p.real_pairs;
      for (std::size_t b = a + 1; b < syn.size(); ++b) {
        p.syn_sum += levenshtein(syn[a], syn[b]);
        ++p.syn_pairs;
      }
    }
  }
  Partial total;
  for (const Partial& p : parts) {
    total.real_sum += p.real_sum;
    total.real_pairs += p.real_pairs;
    total.syn_sum += p.syn_sum;
    total.syn_pairs += p.syn_pairs;
  }
  std::vector<Sentence> hyps, refs;
  for (const auto& r : records) {
    for (const auto& s : r.synthetic_sources) {
      hyps.push_back(s);
      refs.push_back(*r.real_source);
    }
  }
  DiversityReport rep;
  rep.mean_syn_vs_real = static_cast<double>(total.real_sum) / static_cast<double>(total.real_pairs);
  rep.mean_syn_vs_syn = static_cast<double>(total.syn_sum) / static_cast<double>(total.syn_pairs);
  rep.bleu_syn_doc = corpus_bleu(hyps, refs);
  rep.n_records = records.size();
  rep.hbar = hbar;
  return rep;
}

std::string DiversityReport::to_json() const {
  nlohmann::ordered_json j;
  j["hbar"] = hbar;
  j["n_records"] = n_records;
  j["mean_syn_vs_real"] = mean_syn_vs_real;
  j["mean_syn_vs_syn"] = mean_syn_vs_syn;
  j["bleu_syn_doc"] = bleu_syn_doc;
  return j.dump();
}

std::string DiversityReport::to_table() const { return diversity_table({*this}); }

std::string diversity_table(const std::vector<DiversityReport>& reports) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%12s %9s %14s %14s %10s\n", "hbar", "records", "SYN-vs-REAL", "SYN-vs-SYN", "BLEU");
  out << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%12g %9zu %14.3f %14.3f %10.2f\n", r.hbar, r.n_records, r.mean_syn_vs_real,
                  r.mean_syn_vs_syn, r.bleu_syn_doc);
    out << line;
  }
  return out.str();
}

// ---- PCA ------------------------------------------------------------------

PcaResult pca_project(const std::vector<std::vector<double>>& latents, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw std::invalid_argument("pca_project: k must be >= 1");
  if (latents.size() < k + 1) throw std::invalid_argument("pca_project: need at least k+1 vectors");
  const std::size_t n = latents.size(), d = latents.front().size();
  if (d < k) throw std::invalid_argument("pca_project: dimension below k");
  for (const auto& v : latents)
    if (v.size() != d) throw std::invalid_argument("pca_project: vectors of different lengths");

  std::vector<double> mean(d, 0.0);
  for (const auto& v : latents)
    for (std::size_t j = 0; j < d; ++j) mean[j] += v[j];
  for (double& m : mean) m /= static_cast<double>(n);
  std::vector<std::vector<double>> centred(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centred[i][j] = latents[i][j] - mean[j];

  std::vector<double> cov(d * d, 0.0);
  for (const auto& v : centred)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += v[a] * v[b];
  for (double& c : cov) c /= static_cast<double>(n);

  double trace = 0.0;
  for (std::size_t a = 0; a < d; ++a) trace += cov[a * d + a];

  PcaResult res;
  Rng rng(seed);
  for (std::size_t comp = 0; comp < k; ++comp) {
    std::vector<double> v(d), w(d);
    for (double& x : v) x = rng.normal();
    double lambda = 0.0;
    for (int it = 0; it < 10000; ++it) {
      for (std::size_t a = 0; a < d; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < d; ++b) acc += cov[a * d + b] * v[b];
        w[a] = acc;
      }
      const double norm = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
      if (norm <= 1e-300 || norm <= 1e-14 * trace) {
        lambda = 0.0;
        std::fill(v.begin(), v.end(), 0.0);
        break;
      }
      double change = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        const double next = w[a] / norm;
        change = std::max(change, std::abs(next - v[a]));
        v[a] = next;
      }
      lambda = norm;
      if (change < 1e-10) break;
    }
    // fix the sign so the largest-magnitude entry is positive
    std::size_t big = 0;
    for (std::size_t a = 1; a < d; ++a)
      if (std::abs(v[a]) > std::abs(v[big])) big = a;
    if (v[big] < 0)
      for (double& x : v) x = -x;
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) cov[a * d + b] -= lambda * v[a] * v[b];
    res.components.push_back(v);
    res.eigenvalues.push_back(lambda);
  }
  res.coords.assign(n, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < k; ++c)
      res.coords[i][c] = std::inner_product(centred[i].begin(), centred[i].end(), res.components[c].begin(), 0.0);
  return res;
}

// ---- clusters -------------------------------------------------------------

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

Separation cluster_separation(const std::vector<std::vector<std::vector<double>>>& groups) {
  if (groups.size() < 2) throw std::invalid_argument("cluster_separation: need at least 2 groups");
  std::size_t dim = 0;
  for (const auto& g : groups) {
    if (g.size() < 2) throw std::invalid_argument("cluster_separation: every group needs at least 2 members");
    for (const auto& v : g) {
      if (dim == 0) dim = v.size();
      if (v.size() != dim || dim == 0) throw std::invalid_argument("cluster_separation: inconsistent vector lengths");
    }
  }
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = 0; i < groups[g].size(); ++i) {
      for (std::size_t j = i + 1; j < groups[g].size(); ++j, ++n_intra) intra += distance(groups[g][i], groups[g][j]);
      for (std::size_t h = g + 1; h < groups.size(); ++h)
        for (const auto& other : groups[h]) {
          inter += distance(groups[g][i], other);
          ++n_inter;
        }
    }
  }
  return {intra / static_cast<double>(n_intra), inter / static_cast<double>(n_inter)};
}

void write_latents_csv(const std::filesystem::path& path, const std::vector<std::size_t>& group_ids,
                       const std::vector<std::vector<double>>& vectors) {
  if (group_ids.size() != vectors.size()) throw std::invalid_argument("write_latents_csv: ids and vectors differ");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[32];
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    out << group_ids[i];
    for (double x : vectors[i]) {
      std::snprintf(buf, sizeof buf, ",%.17g", x);
      out << buf;
    }
    out << '\n';
  }
}

void read_latents_csv(const std::filesystem::path& path, std::vector<std::size_t>& group_ids,
                      std::vector<std::vector<double>>& vectors) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  group_ids.clear();
  vectors.clear();
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream s(line);
    std::string cell;
    std::vector<double> v;
    std::getline(s, cell, ',');
    try {
      group_ids.push_back(std::stoull(cell));
      while (std::getline(s, cell, ',')) v.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": malformed latent row");
    }
    vectors.push_back(std::move(v));
  }
}

}  // namespace semaug
