#pragma once

#include <string>
#include <vector>

#include "pivotcap/nn.hpp"
#include "pivotcap/structures.hpp"

namespace pivotcap {

struct GcnConfig {
  std::size_t hidden_dim = 64;
  std::size_t layers = 2;
  // When false, incoming and outgoing messages share one weight matrix.
  bool direction_weights = true;
};

void validate(const GcnConfig& cfg);

// Constant message-passing operators for a directed graph:
// incoming[i][j] counts edges j->i, outgoing[i][j] counts edges i->j.
struct Adjacency {
  Tensor incoming;
  Tensor outgoing;
};

Adjacency make_adjacency(std::size_t node_count, const std::vector<SgEdge>& edges);
Adjacency make_adjacency(const ConstituencyTree& tree);

struct GcnLayer {
  Tensor w_self;
  Tensor w_in;
  Tensor w_out;
  Tensor bias;
};

// Direction-aware graph convolution:
//   h_i' = relu(W_self h_i + sum_{j->i} W_in h_j + sum_{i->j} W_out h_j + b)
class Gcn {
 public:
  Gcn() = default;
  Gcn(ParameterStore& store, const std::string& prefix, const GcnConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x0, const Adjacency& adj) const;
  const GcnConfig& config() const { return cfg_; }
  const std::vector<GcnLayer>& layers() const { return layers_; }

 private:
  GcnConfig cfg_;
  std::vector<GcnLayer> layers_;
};

// One GCN serves visual and language scene graphs. Language graphs start
// from label embeddings; visual graphs project their feature rows. Both add
// a node-kind embedding.
class SceneGraphEncoder {
 public:
  SceneGraphEncoder() = default;
  SceneGraphEncoder(ParameterStore& store, const std::string& prefix, const GcnConfig& cfg, Vocabulary labels,
                    std::size_t feature_width, Rng& rng);

  Tensor initial_vectors(const SceneGraph& g) const;
  // One row per node, in node-id order.
  Tensor encode(const SceneGraph& g) const;
  // Mean of the initial vectors as a single row; no message passing.
  Tensor encode_pooled(const SceneGraph& g) const;

  const Gcn& gcn() const { return gcn_; }
  const Vocabulary& labels() const { return labels_; }
  std::size_t feature_width() const { return feature_width_; }

 private:
  Gcn gcn_;
  Vocabulary labels_;
  std::size_t feature_width_ = 0;
  Tensor label_table_;
  Tensor kind_table_;
  Linear visual_projection_;
};

// Encodes constituency trees of either language with shared weights.
// Word nodes start from the caller's token table (the decoder input
// embeddings for that language) plus a leaf-position encoding; phrasal
// nodes start from a phrase-label embedding. Both add a kind embedding.
class TreeEncoder {
 public:
  TreeEncoder() = default;
  TreeEncoder(ParameterStore& store, const std::string& prefix, const GcnConfig& cfg, Vocabulary phrases, Rng& rng);

  Tensor initial_vectors(const ConstituencyTree& t, const Tensor& word_table, const Vocabulary& words) const;
  Tensor encode(const ConstituencyTree& t, const Tensor& word_table, const Vocabulary& words) const;

  const Gcn& gcn() const { return gcn_; }
  const Vocabulary& phrases() const { return phrases_; }

 private:
  Gcn gcn_;
  Vocabulary phrases_;
  Tensor phrase_table_;
  Tensor kind_table_;
};

}  // namespace pivotcap
