#include "pivotcap/alignment.hpp"

#include <cmath>

#include "pivotcap/ops.hpp"

namespace pivotcap {

void validate(const AlignmentConfig& cfg) {
  auto in_range = [](double r) { return r >= -1.0 && r <= 1.0; };
  if (!in_range(cfg.rho_m) || !in_range(cfg.rho_l)) throw ConfigError("align: thresholds must lie in [-1, 1]");
  if (!(cfg.tau_m > 0.0) || !(cfg.tau_l > 0.0)) throw ConfigError("align: temperatures must be positive");
}

Tensor similarity_matrix(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
    throw ShapeError("similarity_matrix: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " are not row sets of equal width");
  }
  return matmul_nt(l2_normalize_rows(a), l2_normalize_rows(b));
}

std::vector<IndexPair> select_positive_pairs(const Tensor& s, double rho) {
  std::vector<IndexPair> out;
  const std::size_t n = s.dim(0), m = s.dim(1);
  const auto v = s.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (v[i * m + j] > rho) out.push_back({i, j});
  return out;
}

ContrastiveResult contrastive_loss(const Tensor& s, const std::vector<IndexPair>& pairs, double tau,
                                   bool include_positive) {
  if (!(tau > 0.0)) throw ConfigError("contrastive_loss: temperature must be positive");
  if (s.rank() != 2) throw ShapeError("contrastive_loss: similarity " + shape_str(s.shape()) + " is not a matrix");
  ContrastiveResult r;
  const std::size_t n = s.dim(0), m = s.dim(1);
  for (const auto& [i, j] : pairs) {
    if (i >= n || j >= m) {
      throw IndexError("contrastive_loss: pair (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
                       shape_str(s.shape()));
    }
    if (include_positive || m > 1) ++r.pairs;
  }
  if (r.pairs == 0) {
    r.loss = Tensor::scalar(0.0);
    r.empty = true;
    return r;
  }
  r.loss = pair_softmax_nll(s, pairs, tau, include_positive);
  return r;
}

namespace {

Tensor nonzero_rows(const Tensor& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  const auto v = x.data();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += v[i * d + k] * v[i * d + k];
    if (sq > 0.0) keep.push_back(i);
  }
  if (keep.size() == n) return x;
  if (keep.empty()) return Tensor();
  return embedding(x, keep);
}

}  // namespace

ContrastiveResult align_nodes(const Tensor& anchors, const Tensor& candidates, double rho, double tau,
                              const AlignmentConfig& cfg) {
  Tensor a = nonzero_rows(anchors);
  Tensor b = nonzero_rows(candidates);
  if (!a.defined() || !b.defined()) return {Tensor::scalar(0.0), 0, true};
  Tensor s = similarity_matrix(a, b);
  ContrastiveResult r = contrastive_loss(s, select_positive_pairs(s, rho), tau, cfg.include_positive_in_denominator);
  if (cfg.symmetric_anchors) {
    Tensor st = transpose(s);
    ContrastiveResult back = contrastive_loss(st, select_positive_pairs(st, rho), tau, cfg.include_positive_in_denominator);
    r.loss = add(r.loss, back.loss);
    r.pairs += back.pairs;
    r.empty = r.empty && back.empty;
  }
  if (cfg.mean_over_pairs && r.pairs > 0) r.loss = scale(r.loss, 1.0 / static_cast<double>(r.pairs));
  return r;
}

ContrastiveResult cma_loss(const PivotCaptioner& model, const SceneGraph& visual, const SceneGraph& language,
                           const AlignmentConfig& cfg) {
  return align_nodes(model.encode_sg(visual), model.encode_sg(language), cfg.rho_m, cfg.tau_m, cfg);
}

ContrastiveResult cla_loss(const PivotCaptioner& model, const ConstituencyTree& pivot, const ConstituencyTree& target,
                           const AlignmentConfig& cfg) {
  return align_nodes(model.encode_sc(pivot, Language::kPivot), model.encode_sc(target, Language::kTarget), cfg.rho_l,
                     cfg.tau_l, cfg);
}

}  // namespace pivotcap
