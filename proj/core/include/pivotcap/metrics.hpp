#pragma once

#include <array>
#include <string>
#include <vector>

#include "pivotcap/structures.hpp"

namespace pivotcap {

using Tokens = std::vector<std::string>;

// Corpus BLEU-1..max_n: clipped n-gram precision, geometric mean, and a
// brevity penalty against the closest reference length (shorter on ties).
std::vector<double> bleu(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                         std::size_t max_n = 4);

// Longest common subsequence length.
std::size_t lcs_length(const Tokens& a, const Tokens& b);

// Mean over candidates of the LCS F-measure (beta = 1.2), taking the best
// precision and best recall over that candidate's references.
double rouge_l(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
               double beta = 1.2);

// Mean over n = 1..4 of the TF-IDF cosine between a candidate and each of
// its references (averaged over references), then averaged over the corpus.
// Document frequencies come from the reference sets; idf = log(|corpus| / df).
double cider(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references);

// Jaccard overlap of directed label pairs; 1.0 when both pair sets are empty.
double sg_coincidence(const SceneGraph& a, const SceneGraph& b);

// Phrasal (label, depth) multisets: matched nodes weigh 1/depth; the sum is
// divided by the size of the multiset union.
double sc_coincidence(const ConstituencyTree& a, const ConstituencyTree& b);

struct MetricReport {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double cider = 0.0;
  double beta_g = 0.0;
  double beta_c = 0.0;
  std::size_t samples = 0;
};

MetricReport caption_metrics(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references);

}  // namespace pivotcap
