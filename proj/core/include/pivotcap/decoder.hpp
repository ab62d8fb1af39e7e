#pragma once

#include <string>
#include <vector>

#include "pivotcap/nn.hpp"
#include "pivotcap/structures.hpp"

namespace pivotcap {

struct DecoderConfig {
  std::size_t model_dim = 32;
  std::size_t heads = 2;
  std::size_t layers = 1;
  std::size_t ff_dim = 64;
  std::size_t max_len = 64;
};

void validate(const DecoderConfig& cfg);

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  static MultiHeadAttention create(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                                   Rng& rng);
  Tensor operator()(const Tensor& queries, const Tensor& keys_values, bool causal) const;
  // Attention over already projected rows; heads merged, no output projection.
  Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) const;
};

struct DecoderLayer {
  LayerNorm self_norm, cross_norm, ff_norm;
  MultiHeadAttention self_attention, cross_attention;
  Linear ff_in, ff_out;
};

// Pre-norm transformer decoder: causal self-attention over the caption
// prefix, cross-attention over a structure memory, and a linear output head
// that starts at zero (uniform predictions).
class TransformerDecoder {
 public:
  TransformerDecoder() = default;
  TransformerDecoder(ParameterStore& store, const std::string& prefix, const DecoderConfig& cfg,
                     std::size_t vocab_size, Rng& rng);

  // [input_ids.size(), vocab] logits; row t predicts the token after input_ids[t].
  Tensor logits(const Tensor& memory, std::span<const std::size_t> input_ids) const;
  // Teacher forcing over BOS..EOS: inputs drop the last id, targets drop the first.
  Tensor teacher_forced_logits(const Tensor& memory, const CaptionSequence& seq) const;
  // Mean token NLL of `seq` (PAD targets skipped).
  Tensor nll(const Tensor& memory, const CaptionSequence& seq) const;
  // Greedy argmax decoding until EOS or max_len tokens; includes BOS and
  // (when produced) EOS. Ties go to the lowest id.
  CaptionSequence greedy(const Tensor& memory, Language lang) const;

  const Tensor& token_embedding() const { return token_embedding_; }
  const DecoderConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_size_; }

 private:
  Tensor hidden(const Tensor& memory, std::span<const std::size_t> input_ids) const;
  void check_memory(const Tensor& memory) const;

  DecoderConfig cfg_;
  std::size_t vocab_size_ = 0;
  Tensor token_embedding_;
  LayerNorm memory_norm_;
  std::vector<DecoderLayer> layers_;
  LayerNorm final_norm_;
  Linear head_;
};

enum class FusionMode {
  // e_j = r_j + sum_i softmax_i(r_j . h_i / sqrt(d)) h_i
  kAttention,
  // Concatenate each SC row with the mean SG row, score SC rows against
  // each other, and mix SC rows: e = softmax((r (+) h)(r (+) h)^T / sqrt(d)) r.
  kLiteral,
};

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& name);

// Row-stochastic attention of SC rows (queries) over SG rows (keys).
Tensor fusion_attention(const Tensor& sc_rows, const Tensor& sg_rows, double scale_dim);
// Pre-softmax scores for the same attention.
Tensor fusion_scores(const Tensor& sc_rows, const Tensor& sg_rows, double scale_dim);
// One fused row per SC node.
Tensor fuse_structures(const Tensor& sc_rows, const Tensor& sg_rows, double scale_dim,
                       FusionMode mode = FusionMode::kAttention);

}  // namespace pivotcap
