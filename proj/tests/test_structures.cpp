#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include "pivotcap/corpus.hpp"
#include "pivotcap/nn.hpp"
#include "pivotcap/structures.hpp"

using namespace pivotcap;
namespace fs = std::filesystem;

namespace {

SceneGraph girl_in_white() {
  SceneGraph g;
  g.nodes = {{0, "girl", SgNodeKind::kObject}, {1, "white", SgNodeKind::kAttribute}};
  g.edges = {{0, 1}};
  return g;
}

ValidationCode sg_code(const SceneGraph& g) {
  try {
    validate_scene_graph(g);
  } catch (const ValidationError& e) {
    return e.code();
  }
  ADD_FAILURE() << "graph validated";
  return ValidationCode::kDanglingEdge;
}

ValidationCode sc_code(const ConstituencyTree& t) {
  try {
    validate_constituency_tree(t);
  } catch (const ValidationError& e) {
    return e.code();
  }
  ADD_FAILURE() << "tree validated";
  return ValidationCode::kEmptyTree;
}

ConstituencyTree s_np_vp() {
  TreeBuilder b;
  const auto s = b.phrase("S");
  const auto np = b.phrase("NP", s);
  b.word("w1", np);
  const auto vp = b.phrase("VP", s);
  b.word("w2", vp);
  return std::move(b).build();
}

fs::path temp_file(const std::string& name, const std::string& contents) {
  const fs::path p = fs::temp_directory_path() / ("pivotcap_test_" + name);
  std::ofstream(p) << contents;
  return p;
}

}  // namespace

TEST(SceneGraph, SingleObjectIsValid) {
  SceneGraph g;
  g.nodes = {{0, "dog", SgNodeKind::kObject}};
  EXPECT_NO_THROW(validate_scene_graph(g));
}

TEST(SceneGraph, RelationWithoutOutgoingEdgeIsRejected) {
  SceneGraph g;
  g.nodes = {{0, "dog", SgNodeKind::kObject}, {1, "on", SgNodeKind::kRelation}, {2, "bed", SgNodeKind::kObject}};
  g.edges = {{0, 1}};
  EXPECT_EQ(sg_code(g), ValidationCode::kRelationArity);
}

TEST(SceneGraph, DanglingEdgeIsRejected) {
  SceneGraph g;
  g.nodes = {{0, "dog", SgNodeKind::kObject}, {1, "cat", SgNodeKind::kObject}, {2, "bed", SgNodeKind::kObject}};
  g.edges = {{0, 99}};
  EXPECT_EQ(sg_code(g), ValidationCode::kDanglingEdge);
}

TEST(SceneGraph, FeatureRowsMustMatchNodes) {
  SceneGraph g = girl_in_white();
  g.features = {{1.0, 2.0}};
  EXPECT_EQ(sg_code(g), ValidationCode::kFeatureShape);
}

TEST(SceneGraph, EdgeTriplesOfAttribute) {
  EXPECT_EQ(sg_edge_triples(girl_in_white()), (std::set<LabelPair>{{"girl", "white"}}));
}

TEST(SceneGraph, ParallelEdgesCollapse) {
  SceneGraph g = girl_in_white();
  g.edges.push_back({0, 1});
  EXPECT_EQ(sg_edge_triples(g).size(), 1u);
}

TEST(SceneGraph, FiveNodeToyPairsEnumerated) {
  // man -> riding -> Horse, man -> young, horse -> brown
  SceneGraph g;
  g.nodes = {{0, "Man", SgNodeKind::kObject},
             {1, "horse", SgNodeKind::kObject},
             {2, "young", SgNodeKind::kAttribute},
             {3, "brown", SgNodeKind::kAttribute},
             {4, "riding", SgNodeKind::kRelation}};
  g.edges = {{0, 2}, {1, 3}, {0, 4}, {4, 1}};
  validate_scene_graph(g);
  const std::set<LabelPair> expected = {{"man", "young"}, {"horse", "brown"}, {"man", "riding"}, {"riding", "horse"}};
  EXPECT_EQ(sg_edge_triples(g), expected);
}

TEST(ConstituencyTree, SimpleTreeIsValid) {
  const auto t = s_np_vp();
  EXPECT_NO_THROW(validate_constituency_tree(t));
  const std::vector<std::string> words = {"w1", "w2"};
  EXPECT_NO_THROW(validate_constituency_tree(t, &words));
  const std::vector<std::string> wrong = {"w2", "w1"};
  EXPECT_THROW(validate_constituency_tree(t, &wrong), ValidationError);
}

TEST(ConstituencyTree, TwoRootsAreRejected) {
  ConstituencyTree t;
  t.nodes = {{0, "S", ScNodeKind::kPhrasal}, {1, "w", ScNodeKind::kWord}, {2, "S", ScNodeKind::kPhrasal},
             {3, "v", ScNodeKind::kWord}};
  t.parent = {std::nullopt, 0, std::nullopt, 2};
  t.children = {{1}, {}, {3}, {}};
  EXPECT_EQ(sc_code(t), ValidationCode::kMultiRoot);
}

TEST(ConstituencyTree, ChildlessPhraseIsRejected) {
  ConstituencyTree t;
  t.nodes = {{0, "S", ScNodeKind::kPhrasal}, {1, "NP", ScNodeKind::kPhrasal}, {2, "w", ScNodeKind::kWord}};
  t.parent = {std::nullopt, 0, 0};
  t.children = {{1, 2}, {}, {}};
  EXPECT_EQ(sc_code(t), ValidationCode::kPhrasalLeaf);
}

TEST(ConstituencyTree, DepthsOfSingleRoot) {
  TreeBuilder b;
  const auto s = b.phrase("S");
  b.word("a", s);
  b.word("dog", s);
  const auto t = std::move(b).build();
  EXPECT_EQ(sc_nodes_by_depth(t), (std::vector<std::pair<std::string, std::size_t>>{{"S", 1}}));
}

TEST(ConstituencyTree, DepthsBreadthFirst) {
  EXPECT_EQ(sc_nodes_by_depth(s_np_vp()),
            (std::vector<std::pair<std::string, std::size_t>>{{"S", 1}, {"NP", 2}, {"VP", 2}}));
}

TEST(ConstituencyTree, ChildDepthIsParentDepthPlusOne) {
  // Recursive depth oracle over corpus trees, with ids relabelled as labels.
  ToyGrammarPair grammar(SceneOntology::standard());
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    auto r = grammar.render(sample_scene(seed, grammar.ontology()));
    for (auto& n : r.target_tree.nodes)
      if (n.kind == ScNodeKind::kPhrasal) n.label = std::to_string(n.id);
    std::map<std::size_t, std::size_t> depth;
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t id, std::size_t d) {
      depth[id] = d;
      for (auto c : r.target_tree.children[id]) walk(c, d + 1);
    };
    walk(r.target_tree.root(), 1);
    for (const auto& [label, d] : sc_nodes_by_depth(r.target_tree)) EXPECT_EQ(depth.at(std::stoul(label)), d);
  }
}

TEST(Vocabulary, EncodeDecodeRoundTrip) {
  const Vocabulary v({"a", "dog", "runs"});
  const Caption c{Language::kPivot, {"a", "dog", "runs"}};
  const auto seq = v.encode(c);
  EXPECT_EQ(seq.ids.front(), Vocabulary::kBos);
  EXPECT_EQ(seq.ids.back(), Vocabulary::kEos);
  EXPECT_EQ(v.decode(seq), c);
  EXPECT_EQ(v.id("cat"), Vocabulary::kUnk);
  EXPECT_THROW(Vocabulary({"a", "a"}), Error);
}

TEST(CaptionSequence, RequiresBoundaries) {
  EXPECT_NO_THROW(validate_caption_sequence({Language::kPivot, {1, 5, 2}}, 6));
  EXPECT_THROW(validate_caption_sequence({Language::kPivot, {5, 2}}, 6), ValidationError);
  EXPECT_THROW(validate_caption_sequence({Language::kPivot, {1, 9, 2}}, 6), ValidationError);
}

TEST(Jsonl, EmptyFileGivesNoRecords) {
  EXPECT_TRUE(read_jsonl(temp_file("empty.jsonl", ""), RecordKind::kSceneGraph).empty());
}

TEST(Jsonl, SceneGraphRoundTrip) {
  SceneGraph g = girl_in_white();
  g.features = {{0.25, -1.0}, {1e-17, 3.5}};
  const fs::path p = fs::temp_directory_path() / "pivotcap_test_sg.jsonl";
  write_jsonl(p, {g});
  EXPECT_EQ(read_jsonl_as<SceneGraph>(p), std::vector<SceneGraph>{g});
}

TEST(Jsonl, MissingNodesIsNamed) {
  const fs::path p = temp_file("bad.jsonl", "{\"edges\": []}\n");
  try {
    read_jsonl(p, RecordKind::kSceneGraph);
    FAIL() << "no schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("\"nodes\""), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos) << e.what();
  }
}

TEST(Jsonl, RoundTripOfCorpusRecords) {
  ToyGrammarPair grammar(SceneOntology::standard());
  FeatureSpec fs_spec;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Example e = make_example(seed, grammar, fs_spec);
    EXPECT_EQ(scene_graph_from_json(to_json_line(e.visual_sg)), e.visual_sg);
    EXPECT_EQ(tree_from_json(to_json_line(e.target_tree)), e.target_tree);
    EXPECT_EQ(caption_from_json(to_json_line(e.pivot)), e.pivot);
  }
}
