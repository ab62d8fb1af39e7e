#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pivotcap/decoder.hpp"
#include "pivotcap/graph_encoder.hpp"
#include "pivotcap/model.hpp"
#include "pivotcap/ops.hpp"

using namespace pivotcap;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

// x (row vector) times W.
std::vector<double> vm(const std::vector<double>& x, const Mat& w) {
  std::vector<double> y(w[0].size(), 0.0);
  for (std::size_t k = 0; k < x.size(); ++k)
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += x[k] * w[k][j];
  return y;
}

Tensor random_rows(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<double> v(n * d);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return Tensor::from_data({n, d}, v);
}

void randomize(ParameterStore& store, Rng& rng) {
  for (const auto& p : store.params())
    for (auto& v : p.tensor.node()->value) v = rng.uniform(-1, 1);
}

Dataset small_data() {
  ToyGrammarPair grammar(SceneOntology::standard());
  CorpusSpec spec;
  spec.caption_pairs = 10;
  spec.parallel_pairs = 10;
  spec.test_pairs = 5;
  return generate_dataset(spec, grammar);
}

ModelConfig small_model() {
  ModelConfig mc;
  mc.dim = 8;
  mc.heads = 2;
  mc.ff_dim = 16;
  mc.max_len = 12;
  return mc;
}

}  // namespace

TEST(Gcn, ZeroWeightsGiveZero) {
  ParameterStore store;
  Rng rng(1);
  Gcn gcn(store, "g", {4, 1, true}, rng);
  for (const auto& p : store.params()) std::fill(p.tensor.node()->value.begin(), p.tensor.node()->value.end(), 0.0);
  const Tensor h = gcn.forward(random_rows(1, 4, rng), make_adjacency(1, {}));
  for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(Gcn, TwoNodeClosedForm) {
  ParameterStore store;
  Rng rng(2);
  Gcn gcn(store, "g", {3, 1, true}, rng);
  randomize(store, rng);
  const Tensor x = random_rows(2, 3, rng);
  const Tensor h = gcn.forward(x, make_adjacency(2, {{0, 1}}));
  const auto& l = gcn.layers()[0];
  const Mat xs = to_mat(x), ws = to_mat(l.w_self), wi = to_mat(l.w_in), wo = to_mat(l.w_out);
  const auto b = l.bias.data();
  // Node 0 sends to node 1: node 0 sees node 1 as outgoing, node 1 sees node 0 as incoming.
  const auto self0 = vm(xs[0], ws), out0 = vm(xs[1], wo);
  const auto self1 = vm(xs[1], ws), in1 = vm(xs[0], wi);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(h.at(0, j), std::max(0.0, self0[j] + out0[j] + b[j]), 1e-14);
    EXPECT_NEAR(h.at(1, j), std::max(0.0, self1[j] + in1[j] + b[j]), 1e-14);
  }
}

TEST(Gcn, SharedDirectionWeights) {
  ParameterStore store;
  Rng rng(3);
  Gcn gcn(store, "g", {3, 1, false}, rng);
  EXPECT_FALSE(store.contains("g/layer0.w_out"));
  EXPECT_EQ(gcn.layers()[0].w_in.node(), gcn.layers()[0].w_out.node());
}

TEST(Gcn, PermutationEquivariance) {
  ParameterStore store;
  Rng rng(4);
  Gcn gcn(store, "g", {4, 2, true}, rng);
  randomize(store, rng);
  const std::size_t n = 5;
  const Tensor x = random_rows(n, 4, rng);
  const std::vector<SgEdge> edges = {{0, 1}, {1, 2}, {3, 1}, {4, 0}, {2, 4}};
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};  // old id -> new id
  std::vector<double> px(n * 4);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 4; ++j) px[perm[i] * 4 + j] = x.at(i, j);
  std::vector<SgEdge> pe;
  for (const auto& e : edges) pe.push_back({perm[e.src], perm[e.dst]});
  const Tensor h = gcn.forward(x, make_adjacency(n, edges));
  const Tensor ph = gcn.forward(Tensor::from_data({n, 4}, px), make_adjacency(n, pe));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(ph.at(perm[i], j), h.at(i, j), 1e-13);
}

TEST(Gcn, TreeAdjacencyFollowsParentLinks) {
  TreeBuilder b;
  const auto s = b.phrase("S");
  b.word("a", s);
  const auto np = b.phrase("NP", s);
  b.word("b", np);
  const Adjacency a = make_adjacency(std::move(b).build());
  // Edges run parent -> child.
  EXPECT_EQ(a.outgoing.at(0, 1), 1.0);
  EXPECT_EQ(a.outgoing.at(0, 2), 1.0);
  EXPECT_EQ(a.incoming.at(3, 2), 1.0);
  EXPECT_EQ(a.incoming.at(0, 1), 0.0);
}

TEST(TreeEncoder, SingleWordTreeIsReluOfOwnTransform) {
  const Dataset data = small_data();
  ModelConfig mc = small_model();
  mc.gcn_layers = 1;
  PivotCaptioner model(mc, Vocabularies::from_dataset(data), data.feature_width, 5);
  TreeBuilder b;
  const auto s = b.phrase("S");
  b.word("a", s);
  const auto tree = std::move(b).build();
  const Tensor h = model.encode_sc(tree, Language::kPivot);
  ASSERT_EQ(h.dim(0), 2u);
  for (double v : h.data()) EXPECT_GE(v, 0.0);
}

TEST(TreeEncoder, RelabelingIdsPermutesRows) {
  const Dataset data = small_data();
  PivotCaptioner model(small_model(), Vocabularies::from_dataset(data), data.feature_width, 6);
  Rng rng(6);
  randomize(model.store(), rng);
  const ConstituencyTree& t = data.caption[0].pivot_tree;
  const std::size_t n = t.nodes.size();
  // Reverse the ids; the leaf order and the tree shape stay the same.
  auto rid = [n](std::size_t i) { return n - 1 - i; };
  ConstituencyTree r;
  r.nodes.resize(n);
  r.parent.resize(n);
  r.children.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.nodes[rid(i)] = {rid(i), t.nodes[i].label, t.nodes[i].kind};
    r.parent[rid(i)] = t.parent[i] ? std::optional<std::size_t>(rid(*t.parent[i])) : std::nullopt;
    for (auto c : t.children[i]) r.children[rid(i)].push_back(rid(c));
  }
  validate_constituency_tree(r);
  const Tensor h = model.encode_sc(t, Language::kPivot);
  const Tensor hr = model.encode_sc(r, Language::kPivot);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h.dim(1); ++j) EXPECT_NEAR(hr.at(rid(i), j), h.at(i, j), 1e-12);
}

TEST(SceneGraphEncoder, RelabelingIdsPermutesRows) {
  const Dataset data = small_data();
  PivotCaptioner model(small_model(), Vocabularies::from_dataset(data), data.feature_width, 7);
  Rng rng(7);
  randomize(model.store(), rng);
  const SceneGraph& g = data.caption[1].visual_sg;
  const std::size_t n = g.nodes.size();
  auto rid = [n](std::size_t i) { return n - 1 - i; };
  SceneGraph r;
  r.nodes.resize(n);
  r.features.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.nodes[rid(i)] = {rid(i), g.nodes[i].label, g.nodes[i].kind};
    r.features[rid(i)] = g.features[i];
  }
  for (const auto& e : g.edges) r.edges.push_back({rid(e.src), rid(e.dst)});
  const Tensor h = model.encode_sg(g);
  const Tensor hr = model.encode_sg(r);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < h.dim(1); ++j) EXPECT_NEAR(hr.at(rid(i), j), h.at(i, j), 1e-12);
}

TEST(Decoder, ZeroHeadGivesUniformLoss) {
  ParameterStore store;
  Rng rng(8);
  DecoderConfig dc;
  dc.model_dim = 8;
  dc.ff_dim = 16;
  TransformerDecoder dec(store, "d", dc, 16, rng);
  const Tensor memory = random_rows(3, 8, rng);
  EXPECT_NEAR(dec.nll(memory, {Language::kPivot, {1, 5, 6, 7, 2}}).item(), std::log(16.0), 1e-12);
}

TEST(Decoder, PerturbingATokenOnlyChangesLaterPositions) {
  ParameterStore store;
  Rng rng(9);
  DecoderConfig dc;
  dc.model_dim = 8;
  dc.ff_dim = 16;
  dc.layers = 2;
  TransformerDecoder dec(store, "d", dc, 12, rng);
  randomize(store, rng);
  const Tensor memory = random_rows(4, 8, rng);
  const std::vector<std::size_t> ids = {1, 5, 6, 7, 8, 9};
  const Tensor base = dec.logits(memory, ids);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    auto changed = ids;
    changed[t] = 11;
    const Tensor other = dec.logits(memory, changed);
    for (std::size_t pos = 0; pos < ids.size(); ++pos) {
      double diff = 0.0;
      for (std::size_t v = 0; v < 12; ++v) diff = std::max(diff, std::abs(other.at(pos, v) - base.at(pos, v)));
      if (pos < t) {
        EXPECT_EQ(diff, 0.0) << "position " << pos << " saw token " << t;
      } else {
        EXPECT_GT(diff, 0.0) << "position " << pos << " ignored token " << t;
      }
    }
  }
}

TEST(Decoder, GreedyIsDeterministicAndMatchesArgmax) {
  ParameterStore store;
  Rng rng(10);
  DecoderConfig dc;
  dc.model_dim = 8;
  dc.ff_dim = 16;
  dc.max_len = 6;
  TransformerDecoder dec(store, "d", dc, 10, rng);
  randomize(store, rng);
  const Tensor memory = random_rows(3, 8, rng);
  const auto a = dec.greedy(memory, Language::kTarget);
  const auto b = dec.greedy(memory, Language::kTarget);
  EXPECT_EQ(a.ids, b.ids);
  ASSERT_GE(a.ids.size(), 2u);
  EXPECT_EQ(a.ids.front(), Vocabulary::kBos);
  // Recompute each step from scratch.
  std::vector<std::size_t> prefix = {Vocabulary::kBos};
  for (std::size_t i = 1; i < a.ids.size(); ++i) {
    const Tensor l = dec.logits(memory, prefix);
    std::size_t best = 0;
    for (std::size_t v = 1; v < 10; ++v)
      if (l.at(prefix.size() - 1, v) > l.at(prefix.size() - 1, best)) best = v;
    EXPECT_EQ(a.ids[i], best);
    prefix.push_back(best);
  }
}

TEST(Decoder, EmptyTeacherSequenceIsAnError) {
  ParameterStore store;
  Rng rng(11);
  DecoderConfig dc;
  dc.model_dim = 8;
  dc.ff_dim = 16;
  TransformerDecoder dec(store, "d", dc, 10, rng);
  EXPECT_THROW(dec.nll(random_rows(2, 8, rng), {Language::kPivot, {}}), Error);
}

TEST(Fusion, SingleIdenticalRowGetsFullWeight) {
  const Tensor r = Tensor::from_data({1, 3}, {0.2, -0.4, 1.0});
  EXPECT_EQ(fusion_attention(r, r, 3.0).item(), 1.0);
  const Tensor e = fuse_structures(r, r, 3.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(e.at(0, j), 2.0 * r.at(0, j));
}

TEST(Fusion, OrthogonalRowsHandComputed) {
  const Tensor h = Tensor::from_data({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const Tensor r = Tensor::from_data({1, 2}, {2.0, 0.0});
  const double s0 = 2.0 / std::sqrt(2.0);
  const double w0 = std::exp(s0) / (std::exp(s0) + 1.0);
  const Tensor a = fusion_attention(r, h, 2.0);
  EXPECT_NEAR(a.at(0, 0), w0, 1e-15);
  EXPECT_NEAR(a.at(0, 1), 1.0 - w0, 1e-15);
  const Tensor e = fuse_structures(r, h, 2.0);
  EXPECT_NEAR(e.at(0, 0), 2.0 + w0, 1e-15);
  EXPECT_NEAR(e.at(0, 1), 1.0 - w0, 1e-15);
}

TEST(Fusion, DoublingDimensionScalesScores) {
  Rng rng(12);
  const Tensor r = random_rows(2, 4, rng), h = random_rows(3, 4, rng);
  const Tensor a = fusion_scores(r, h, 4.0), b = fusion_scores(r, h, 16.0);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(b.data()[i], a.data()[i] / 2.0, 1e-15);
}

TEST(Fusion, ResidualAblationFeedsRawRows) {
  const Dataset data = small_data();
  ModelConfig mc = small_model();
  mc.use_residual = false;
  PivotCaptioner model(mc, Vocabularies::from_dataset(data), data.feature_width, 13);
  Rng rng(13);
  const Tensor r = random_rows(3, 8, rng), h = random_rows(4, 8, rng);
  const Tensor e = model.fuse(r, h);
  for (std::size_t i = 0; i < r.numel(); ++i) EXPECT_EQ(e.data()[i], r.data()[i]);
}

TEST(Fusion, LiteralModeMixesStructureRows) {
  Rng rng(14);
  const Tensor r = random_rows(3, 4, rng), h = random_rows(2, 4, rng);
  const Tensor e = fuse_structures(r, h, 4.0, FusionMode::kLiteral);
  ASSERT_EQ(e.shape(), (Shape{3, 4}));
  // Each output row is a convex combination of SC rows.
  for (std::size_t j = 0; j < 4; ++j) {
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < 3; ++i) lo = std::min(lo, r.at(i, j)), hi = std::max(hi, r.at(i, j));
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_GE(e.at(i, j), lo - 1e-12);
      EXPECT_LE(e.at(i, j), hi + 1e-12);
    }
  }
}
