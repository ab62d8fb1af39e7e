#pragma once

#include <utility>
#include <vector>

#include "pivotcap/model.hpp"

namespace pivotcap {

struct AlignmentConfig {
  double rho_m = 0.6;
  double rho_l = 0.3;
  double tau_m = 1.0;
  double tau_l = 1.0;
  // Conventional InfoNCE normalizer (positive included in Z).
  bool include_positive_in_denominator = false;
  // Also use nodes of the second structure as anchors.
  bool symmetric_anchors = false;
  // Divide the node-level loss by its number of pairs.
  bool mean_over_pairs = true;
};

void validate(const AlignmentConfig& cfg);

using IndexPair = std::pair<std::size_t, std::size_t>;

// Cosine similarity of every row of `a` with every row of `b`.
Tensor similarity_matrix(const Tensor& a, const Tensor& b);

// (i, j) with S[i][j] > rho, row-major order.
std::vector<IndexPair> select_positive_pairs(const Tensor& s, double rho);

struct ContrastiveResult {
  Tensor loss;
  std::size_t pairs = 0;
  // Set when no pair contributed a term; the loss is then 0.
  bool empty = false;
};

// Sum over pairs of -(S[i][j]/tau - log Z_i), where Z_i sums exp(S[i][k]/tau)
// over k != j (or over all k when include_positive is set). A pair whose
// normalizer would be empty contributes nothing.
ContrastiveResult contrastive_loss(const Tensor& s, const std::vector<IndexPair>& pairs, double tau,
                                   bool include_positive);

// Contrastive loss between two node sets with threshold selection. Rows
// with zero norm are left out.
ContrastiveResult align_nodes(const Tensor& anchors, const Tensor& candidates, double rho, double tau,
                              const AlignmentConfig& cfg);

// Visual-SG nodes against language-SG nodes, both through the shared SG encoder.
ContrastiveResult cma_loss(const PivotCaptioner& model, const SceneGraph& visual, const SceneGraph& language,
                           const AlignmentConfig& cfg);
// Pivot-SC nodes against target-SC nodes, both through the shared SC encoder.
ContrastiveResult cla_loss(const PivotCaptioner& model, const ConstituencyTree& pivot, const ConstituencyTree& target,
                           const AlignmentConfig& cfg);

}  // namespace pivotcap
