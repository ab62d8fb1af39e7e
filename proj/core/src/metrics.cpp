#include "pivotcap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pivotcap {

namespace {

using Counts = std::map<Tokens, std::size_t>;

Counts ngrams(const Tokens& t, std::size_t n) {
  Counts c;
  if (t.size() < n) return c;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++c[Tokens(t.begin() + static_cast<std::ptrdiff_t>(i), t.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return c;
}

void check_corpus(const char* name, const std::vector<Tokens>& c, const std::vector<std::vector<Tokens>>& r) {
  if (c.empty()) throw Error(std::string(name) + ": empty candidate set");
  if (c.size() != r.size()) {
    throw Error(std::string(name) + ": " + std::to_string(c.size()) + " candidates but " + std::to_string(r.size()) +
                " reference sets");
  }
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r[i].empty()) throw Error(std::string(name) + ": candidate " + std::to_string(i) + " has no references");
}

}  // namespace

std::vector<double> bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                         std::size_t max_n) {
  check_corpus("bleu", candidates, references);
  if (max_n == 0) throw Error("bleu: max_n must be positive");
  std::vector<double> matched(max_n, 0.0), total(max_n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    cand_len += static_cast<double>(cand.size());
    std::size_t best = references[s].front().size();
    for (const auto& ref : references[s]) {
      const auto d = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
      if (d(ref.size()) < d(best) || (d(ref.size()) == d(best) && ref.size() < best)) best = ref.size();
    }
    ref_len += static_cast<double>(best);
    for (std::size_t n = 1; n <= max_n; ++n) {
      const Counts c = ngrams(cand, n);
      Counts max_ref;
      for (const auto& ref : references[s])
        for (const auto& [g, k] : ngrams(ref, n)) max_ref[g] = std::max(max_ref[g], k);
      for (const auto& [g, k] : c) {
        auto it = max_ref.find(g);
        matched[n - 1] += static_cast<double>(std::min(k, it == max_ref.end() ? 0 : it->second));
        total[n - 1] += static_cast<double>(k);
      }
    }
  }
  const double bp = cand_len == 0.0 ? 0.0 : (cand_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / cand_len));
  std::vector<double> out(max_n, 0.0);
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (total[n - 1] == 0.0 || matched[n - 1] == 0.0) zero = true;
    if (!zero) log_sum += std::log(matched[n - 1] / total[n - 1]);
    out[n - 1] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(n));
  }
  return out;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references, double beta) {
  check_corpus("rouge_l", candidates, references);
  double total = 0.0;
  for (std::size_t s = 0; s < candidates.size(); ++s) {
    const auto& cand = candidates[s];
    double p = 0.0, r = 0.0;
    for (const auto& ref : references[s]) {
      const double l = static_cast<double>(lcs_length(cand, ref));
      if (!cand.empty()) p = std::max(p, l / static_cast<double>(cand.size()));
      if (!ref.empty()) r = std::max(r, l / static_cast<double>(ref.size()));
    }
    if (p > 0.0 && r > 0.0) total += (1.0 + beta * beta) * p * r / (r + beta * beta * p);
  }
  return total / static_cast<double>(candidates.size());
}

double cider(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references) {
  check_corpus("cider", candidates, references);
  const double docs = static_cast<double>(candidates.size());
  double score = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Tokens, double> df;
    for (const auto& refs : references) {
      std::map<Tokens, bool> seen;
      for (const auto& ref : refs)
        for (const auto& [g, k] : ngrams(ref, n)) seen[g] = true;
      for (const auto& [g, b] : seen) df[g] += 1.0;
    }
    auto vec = [&](const Tokens& t) {
      std::map<Tokens, double> v;
      const Counts c = ngrams(t, n);
      double len = 0.0;
      for (const auto& [g, k] : c) len += static_cast<double>(k);
      for (const auto& [g, k] : c) {
        auto it = df.find(g);
        const double idf = std::log(docs / (it == df.end() ? 1.0 : it->second));
        v[g] = static_cast<double>(k) / len * idf;
      }
      return v;
    };
    auto norm = [](const std::map<Tokens, double>& v) {
      double s = 0.0;
      for (const auto& [g, x] : v) s += x * x;
      return std::sqrt(s);
    };
    for (std::size_t s = 0; s < candidates.size(); ++s) {
      const auto cv = vec(candidates[s]);
      const double cn = norm(cv);
      double sim = 0.0;
      for (const auto& ref : references[s]) {
        const auto rv = vec(ref);
        const double rn = norm(rv);
        if (cn == 0.0 || rn == 0.0) continue;
        double dot = 0.0;
        for (const auto& [g, x] : cv) {
          auto it = rv.find(g);
          if (it != rv.end()) dot += x * it->second;
        }
        sim += dot / (cn * rn);
      }
      score += sim / static_cast<double>(references[s].size()) / 4.0;
    }
  }
  return score / docs;
}

double sg_coincidence(const SceneGraph& a, const SceneGraph& b) {
  const auto pa = sg_edge_triples(a);
  const auto pb = sg_edge_triples(b);
  if (pa.empty() && pb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& p : pa) inter += pb.count(p);
  return static_cast<double>(inter) / static_cast<double>(pa.size() + pb.size() - inter);
}

double sc_coincidence(const ConstituencyTree& a, const ConstituencyTree& b) {
  std::map<std::pair<std::string, std::size_t>, std::size_t> ca, cb;
  for (const auto& n : sc_nodes_by_depth(a)) ++ca[n];
  for (const auto& n : sc_nodes_by_depth(b)) ++cb[n];
  double matched = 0.0, uni = 0.0;
  auto keys = ca;
  for (const auto& [k, c] : cb) keys[k];
  for (const auto& [k, unused] : keys) {
    const std::size_t x = ca.count(k) ? ca[k] : 0;
    const std::size_t y = cb.count(k) ? cb[k] : 0;
    matched += static_cast<double>(std::min(x, y)) / static_cast<double>(k.second);
    uni += static_cast<double>(std::max(x, y));
  }
  return uni == 0.0 ? 0.0 : matched / uni;
}

MetricReport caption_metrics(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references) {
  MetricReport r;
  const auto b = bleu(candidates, references, 4);
  std::copy(b.begin(), b.end(), r.bleu.begin());
  r.rouge_l = rouge_l(candidates, references);
  r.cider = cider(candidates, references);
  r.samples = candidates.size();
  return r;
}

}  // namespace pivotcap
