#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "pivotcap/tensor.hpp"

namespace pivotcap {

// Elementwise ops. `b` may equal `a` in shape, or be a suffix of it, in
// which case it is repeated over a's leading dimensions. No other
// broadcasting is performed.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
// [n,k] x [m,k]^T -> [n,m]
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

Tensor softmax(const Tensor& a, std::size_t axis);
// Row-wise softmax over [n,m] where row i only sees columns j <= i + offset.
// Masked entries are exactly zero.
Tensor causal_softmax(const Tensor& a, std::size_t offset = 0);
// Normalizes over the last axis; gamma and beta have the last axis' extent.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Rows of `table` ([n,d]) selected by `ids` -> [ids.size(), d].
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean over one axis, keeping it with extent 1.
Tensor mean_axis(const Tensor& a, std::size_t axis);

// Elements at flat row-major positions -> [indices.size()].
Tensor gather(const Tensor& a, std::span<const std::size_t> flat_indices);
// log(sum(exp(a))) over all elements, max-shifted.
Tensor logsumexp(const Tensor& a);

// Sum over (row, positive) pairs of logsumexp(s[row][k] / tau) - s[row][positive] / tau,
// k ranging over the row with the positive left out unless include_positive.
// Pairs whose normalizer would be empty are skipped.
Tensor pair_softmax_nll(const Tensor& s, std::span<const std::pair<std::size_t, std::size_t>> pairs, double tau,
                        bool include_positive);

// Each row divided by its Euclidean norm. Zero-norm rows are an error.
Tensor l2_normalize_rows(const Tensor& a);

inline constexpr std::size_t kNoIgnore = static_cast<std::size_t>(-1);

// Mean negative log-likelihood of `targets` under row-wise softmax of
// `logits` ([T,V]). Positions whose target equals `ignore_id` are skipped;
// if every position is skipped the result is 0.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                     std::size_t ignore_id = kNoIgnore);

}  // namespace pivotcap
