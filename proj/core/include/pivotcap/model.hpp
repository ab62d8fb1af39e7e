#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pivotcap/corpus.hpp"
#include "pivotcap/decoder.hpp"
#include "pivotcap/graph_encoder.hpp"

namespace pivotcap {

struct ModelConfig {
  std::size_t dim = 32;
  std::size_t heads = 2;
  std::size_t decoder_layers = 1;
  std::size_t ff_dim = 64;
  std::size_t max_len = 64;
  std::size_t gcn_layers = 2;
  bool direction_weights = true;
  FusionMode fusion = FusionMode::kAttention;
  // Ablations. use_sg=false replaces SG node rows by one pooled row,
  // use_sc=false encodes the pivot as a flat tree (S over its words),
  // use_residual=false feeds SC rows to the target decoder without fusion.
  bool use_sg = true;
  bool use_sc = true;
  bool use_residual = true;
};

void validate(const ModelConfig& cfg);

struct Vocabularies {
  Vocabulary pivot;
  Vocabulary target;
  Vocabulary sg_labels;
  Vocabulary phrases;

  // Built from the caption and parallel splits only.
  static Vocabularies from_dataset(const Dataset& data);
};

// Flat constituency tree: one S node over the caption's words.
ConstituencyTree flat_tree(const std::vector<std::string>& words);

struct Prediction {
  Caption pivot;
  ConstituencyTree pivot_tree;
  Caption target;
};

// Image -> pivot captioner (SG encoder + pivot decoder) and pivot -> target
// translator (SC encoder + fusion + target decoder) sharing one parameter
// store. Parameter creation order is fixed, so a given seed always yields
// the same initial weights.
class PivotCaptioner {
 public:
  PivotCaptioner(const ModelConfig& cfg, Vocabularies vocab, std::size_t feature_width, std::uint64_t seed);

  PivotCaptioner(const PivotCaptioner&) = delete;
  PivotCaptioner& operator=(const PivotCaptioner&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const Vocabularies& vocab() const { return vocab_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  std::size_t feature_width() const { return feature_width_; }

  // SG node rows (visual or language graph).
  Tensor encode_sg(const SceneGraph& g) const;
  // SC node rows; word nodes start from the decoder input embeddings of
  // the tree's language.
  Tensor encode_sc(const ConstituencyTree& t, Language lang) const;
  // Memory for the target decoder: one row per SC node.
  Tensor fuse(const Tensor& sc_rows, const Tensor& sg_rows) const;

  const TransformerDecoder& pivot_decoder() const { return pivot_decoder_; }
  const TransformerDecoder& target_decoder() const { return target_decoder_; }

  // Teacher-forced mean token NLL of `pivot` given the graph.
  Tensor caption_nll(const SceneGraph& g, const Caption& pivot) const;
  // Teacher-forced mean token NLL of `target` given the pivot tree and the
  // scene graph fused into it.
  Tensor translation_nll(const SceneGraph& g, const ConstituencyTree& pivot_tree, const Caption& target) const;
  // Same, with the graph already encoded.
  Tensor translation_nll_from(const Tensor& sg_rows, const ConstituencyTree& pivot_tree, const Caption& target) const;

  Caption generate_pivot(const SceneGraph& g) const;
  Caption generate_target(const SceneGraph& g, const ConstituencyTree& pivot_tree) const;
  // Image -> pivot -> parsed pivot tree -> target.
  Prediction predict(const SceneGraph& visual, const CaptionParser& parser) const;

 private:
  ModelConfig cfg_;
  Vocabularies vocab_;
  std::size_t feature_width_;
  ParameterStore store_;
  SceneGraphEncoder sg_encoder_;
  TreeEncoder sc_encoder_;
  TransformerDecoder pivot_decoder_;
  TransformerDecoder target_decoder_;
};

}  // namespace pivotcap
