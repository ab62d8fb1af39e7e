#include "pivotcap/graph_encoder.hpp"

#include "pivotcap/ops.hpp"

namespace pivotcap {

void validate(const GcnConfig& cfg) {
  if (cfg.hidden_dim == 0) throw ConfigError("gcn hidden_dim must be positive");
  if (cfg.layers == 0) throw ConfigError("gcn layers must be at least 1");
}

Adjacency make_adjacency(std::size_t n, const std::vector<SgEdge>& edges) {
  std::vector<double> in(n * n, 0.0), out(n * n, 0.0);
  for (const auto& e : edges) {
    if (e.src >= n || e.dst >= n) {
      throw IndexError("adjacency: edge " + std::to_string(e.src) + "->" + std::to_string(e.dst) + " outside " +
                       std::to_string(n) + " nodes");
    }
    in[e.dst * n + e.src] += 1.0;
    out[e.src * n + e.dst] += 1.0;
  }
  return {Tensor::from_data({n, n}, std::move(in)), Tensor::from_data({n, n}, std::move(out))};
}

Adjacency make_adjacency(const ConstituencyTree& tree) {
  std::vector<SgEdge> edges;
  for (std::size_t p = 0; p < tree.children.size(); ++p)
    for (auto c : tree.children[p]) edges.push_back({p, c});
  return make_adjacency(tree.nodes.size(), edges);
}

Gcn::Gcn(ParameterStore& store, const std::string& prefix, const GcnConfig& cfg, Rng& rng) : cfg_(cfg) {
  validate(cfg);
  const std::size_t d = cfg.hidden_dim;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + "/layer" + std::to_string(l);
    GcnLayer layer;
    layer.w_self = store.add(p + ".w_self", xavier_uniform({d, d}, rng));
    layer.w_in = store.add(p + ".w_in", scale(xavier_uniform({d, d}, rng), 0.5).detach());
    layer.w_out = cfg.direction_weights ? store.add(p + ".w_out", scale(xavier_uniform({d, d}, rng), 0.5).detach())
                                        : layer.w_in;
    layer.bias = store.add(p + ".bias", Tensor::zeros({d}));
    layers_.push_back(std::move(layer));
  }
}

Tensor Gcn::forward(const Tensor& x0, const Adjacency& adj) const {
  if (x0.rank() != 2 || x0.dim(1) != cfg_.hidden_dim) {
    throw ShapeError("gcn: input " + shape_str(x0.shape()) + " does not have width " + std::to_string(cfg_.hidden_dim));
  }
  if (adj.incoming.dim(0) != x0.dim(0)) {
    throw ShapeError("gcn: adjacency " + shape_str(adj.incoming.shape()) + " for " + std::to_string(x0.dim(0)) + " nodes");
  }
  Tensor h = x0;
  for (const auto& layer : layers_) {
    Tensor pre = matmul(h, layer.w_self);
    pre = add(pre, matmul(matmul(adj.incoming, h), layer.w_in));
    pre = add(pre, matmul(matmul(adj.outgoing, h), layer.w_out));
    h = relu(add(pre, layer.bias));
  }
  return h;
}

namespace {

std::size_t sg_kind_index(SgNodeKind k) { return static_cast<std::size_t>(k); }
std::size_t sc_kind_index(ScNodeKind k) { return static_cast<std::size_t>(k); }

}  // namespace

SceneGraphEncoder::SceneGraphEncoder(ParameterStore& store, const std::string& prefix, const GcnConfig& cfg,
                                     Vocabulary labels, std::size_t feature_width, Rng& rng)
    : labels_(std::move(labels)), feature_width_(feature_width) {
  const std::size_t d = cfg.hidden_dim;
  label_table_ = store.add(prefix + ".label_embedding", normal_init({labels_.size(), d}, 0.5, rng));
  kind_table_ = store.add(prefix + ".kind_embedding", normal_init({3, d}, 0.5, rng));
  if (feature_width_ > 0) {
    visual_projection_ = Linear::create(store, prefix + ".visual_projection", feature_width_, d, rng);
  }
  gcn_ = Gcn(store, prefix + "/gcn", cfg, rng);
}

Tensor SceneGraphEncoder::initial_vectors(const SceneGraph& g) const {
  if (g.nodes.empty()) throw ShapeError("scene graph encoder: graph has no nodes");
  std::vector<std::size_t> kinds;
  for (const auto& n : g.nodes) kinds.push_back(sg_kind_index(n.kind));
  Tensor kind = embedding(kind_table_, kinds);
  if (g.has_features()) {
    if (g.feature_width() != feature_width_ || g.features.size() != g.nodes.size()) {
      throw ShapeError("scene graph encoder: features of width " + std::to_string(g.feature_width()) + " for " +
                       std::to_string(g.features.size()) + " rows, expected width " + std::to_string(feature_width_) +
                       " for " + std::to_string(g.nodes.size()) + " nodes");
    }
    std::vector<double> flat;
    for (const auto& row : g.features) flat.insert(flat.end(), row.begin(), row.end());
    Tensor feats = Tensor::from_data({g.nodes.size(), feature_width_}, std::move(flat));
    return add(visual_projection_(feats), kind);
  }
  std::vector<std::size_t> ids;
  for (const auto& n : g.nodes) ids.push_back(labels_.id(fold_case(n.label)));
  return add(embedding(label_table_, ids), kind);
}

Tensor SceneGraphEncoder::encode(const SceneGraph& g) const {
  return gcn_.forward(initial_vectors(g), make_adjacency(g.nodes.size(), g.edges));
}

Tensor SceneGraphEncoder::encode_pooled(const SceneGraph& g) const { return mean_axis(initial_vectors(g), 0); }

TreeEncoder::TreeEncoder(ParameterStore& store, const std::string& prefix, const GcnConfig& cfg, Vocabulary phrases,
                         Rng& rng)
    : phrases_(std::move(phrases)) {
  const std::size_t d = cfg.hidden_dim;
  phrase_table_ = store.add(prefix + ".phrase_embedding", normal_init({phrases_.size(), d}, 0.5, rng));
  kind_table_ = store.add(prefix + ".kind_embedding", normal_init({2, d}, 0.5, rng));
  gcn_ = Gcn(store, prefix + "/gcn", cfg, rng);
}

Tensor TreeEncoder::initial_vectors(const ConstituencyTree& t, const Tensor& word_table,
                                    const Vocabulary& words) const {
  const std::size_t n = t.nodes.size();
  if (n == 0) throw ShapeError("tree encoder: tree has no nodes");
  const std::size_t d = gcn_.config().hidden_dim;
  if (word_table.rank() != 2 || word_table.dim(1) != d) {
    throw ShapeError("tree encoder: word table " + shape_str(word_table.shape()) + " does not have width " +
                     std::to_string(d));
  }
  // Gather word rows and phrase rows separately, then scatter both into node
  // order with a constant selection matrix.
  std::vector<std::size_t> word_ids, phrase_ids, word_nodes, phrase_nodes, kinds(n);
  std::vector<std::size_t> leaf_position(n, 0);
  const auto leaves = t.leaf_ids();
  for (std::size_t k = 0; k < leaves.size(); ++k) leaf_position[leaves[k]] = k;
  std::vector<std::size_t> word_positions;
  for (std::size_t i = 0; i < n; ++i) {
    kinds[i] = sc_kind_index(t.nodes[i].kind);
    if (t.nodes[i].kind == ScNodeKind::kWord) {
      word_ids.push_back(words.id(t.nodes[i].label));
      word_nodes.push_back(i);
      word_positions.push_back(leaf_position[i]);
    } else {
      phrase_ids.push_back(phrases_.id(t.nodes[i].label));
      phrase_nodes.push_back(i);
    }
  }
  Tensor x = embedding(kind_table_, kinds);
  auto scatter = [n](const std::vector<std::size_t>& rows) {
    std::vector<double> sel(n * rows.size(), 0.0);
    for (std::size_t k = 0; k < rows.size(); ++k) sel[rows[k] * rows.size() + k] = 1.0;
    return Tensor::from_data({n, rows.size()}, std::move(sel));
  };
  if (!word_nodes.empty()) {
    Tensor w = add(embedding(word_table, word_ids), sinusoidal_positions(word_positions, d));
    x = add(x, matmul(scatter(word_nodes), w));
  }
  if (!phrase_nodes.empty()) x = add(x, matmul(scatter(phrase_nodes), embedding(phrase_table_, phrase_ids)));
  return x;
}

Tensor TreeEncoder::encode(const ConstituencyTree& t, const Tensor& word_table, const Vocabulary& words) const {
  return gcn_.forward(initial_vectors(t, word_table, words), make_adjacency(t));
}

}  // namespace pivotcap
