#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "pivotcap/corpus.hpp"
#include "pivotcap/metrics.hpp"

using namespace pivotcap;
namespace fs = std::filesystem;

namespace {

const ToyGrammarPair& grammar() {
  static const ToyGrammarPair g(SceneOntology::standard());
  return g;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("pivotcap_test_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Ontology, StandardIsValidAndSized) {
  const auto& o = grammar().ontology();
  EXPECT_NO_THROW(o.validate());
  EXPECT_GE(o.objects.size(), 15u);
  EXPECT_GE(o.attributes.size(), 8u);
  EXPECT_GE(o.relations.size(), 6u);
}

TEST(Scene, SameSeedSameScene) {
  EXPECT_EQ(sample_scene(77, grammar().ontology()), sample_scene(77, grammar().ontology()));
}

TEST(Scene, FewCollisionsOverThousandSeeds) {
  std::size_t collisions = 0;
  const auto& o = grammar().ontology();
  for (std::uint64_t s = 0; s < 1000; ++s)
    if (sample_scene(s, o) == sample_scene(s + 1000, o)) ++collisions;
  EXPECT_LT(collisions, 5u);
}

TEST(Scene, ShapeAndCompatibility) {
  const auto& o = grammar().ontology();
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const Scene sc = sample_scene(s, o);
    ASSERT_GE(sc.objects.size(), 2u);
    ASSERT_LE(sc.objects.size(), 5u);
    ASSERT_GE(sc.relations.size(), 1u);
    ASSERT_LE(sc.relations.size(), 3u);
    for (const auto& ob : sc.objects) {
      ASSERT_LE(ob.attributes.size(), 2u);
      for (auto a : ob.attributes)
        ASSERT_NE(std::find(o.object_attributes[ob.label].begin(), o.object_attributes[ob.label].end(), a),
                  o.object_attributes[ob.label].end());
    }
    for (const auto& r : sc.relations)
      ASSERT_TRUE(o.relation_allowed(r.relation, sc.objects[r.subject].label, sc.objects[r.object].label));
  }
}

TEST(Scene, SingleObjectOntology) {
  const auto o = SceneOntology::single_object("ball");
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Scene sc = sample_scene(s, o);
    EXPECT_EQ(sc.objects.size(), 1u);
    EXPECT_TRUE(sc.relations.empty());
    EXPECT_EQ(scene_to_graph(sc, o).nodes.size(), 1u + sc.objects[0].attributes.size());
  }
}

TEST(SceneGraphs, FeaturesAreDeterministicWithoutNoise) {
  const auto& o = grammar().ontology();
  FeatureSpec spec;
  spec.noise_sigma = 0.0;
  const Scene sc = sample_scene(3, o);
  const SceneGraph a = derive_scene_graph(sc, o, spec, 1);
  const SceneGraph b = derive_scene_graph(sc, o, spec, 2);
  EXPECT_EQ(a, b);
  for (std::size_t i = 0; i < a.nodes.size(); ++i) EXPECT_EQ(a.features[i], label_feature(a.nodes[i].label, spec));
}

TEST(SceneGraphs, ThousandSamplesValidate) {
  const auto& o = grammar().ontology();
  FeatureSpec spec;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const SceneGraph g = derive_scene_graph(sample_scene(s, o), o, spec, s);
    ASSERT_NO_THROW(validate_scene_graph(g)) << "seed " << s;
    ASSERT_EQ(g.feature_width(), spec.width);
  }
}

TEST(Rendering, FixedSceneGivesFixedTuple) {
  const Scene sc = sample_scene(11, grammar().ontology());
  const auto a = grammar().render(sc);
  const auto b = grammar().render(sc);
  EXPECT_EQ(a.pivot, b.pivot);
  EXPECT_EQ(a.target, b.target);
  EXPECT_EQ(a.pivot_tree, b.pivot_tree);
  EXPECT_EQ(a.target_tree, b.target_tree);
  EXPECT_EQ(a.language_sg, b.language_sg);
}

TEST(Rendering, AttributesFollowTheNounInTarget) {
  // Trace the reordering rule on every attribute-bearing scene: the pivot
  // tree never has an ADJP, the target tree has one per attributed noun,
  // and the target leaves are the dictionary images of a reordering of the
  // pivot leaves.
  const auto& o = grammar().ontology();
  std::size_t traced = 0;
  for (std::uint64_t s = 0; s < 300; ++s) {
    const Scene sc = sample_scene(s, o);
    const auto r = grammar().render(sc);
    std::size_t attributed = 0;
    for (const auto& ob : sc.objects) attributed += !ob.attributes.empty();
    if (attributed == 0) continue;
    ++traced;
    auto count = [](const ConstituencyTree& t, const std::string& label) {
      std::size_t n = 0;
      for (const auto& [l, d] : sc_nodes_by_depth(t)) n += l == label;
      return n;
    };
    EXPECT_EQ(count(r.pivot_tree, "ADJP"), 0u);
    EXPECT_GE(count(r.target_tree, "ADJP"), attributed);
    std::vector<std::string> mapped;
    for (const auto& w : r.pivot.tokens) mapped.push_back(grammar().to_target_word(w));
    EXPECT_NE(mapped, r.target.tokens);
    std::sort(mapped.begin(), mapped.end());
    auto target = r.target.tokens;
    std::sort(target.begin(), target.end());
    EXPECT_EQ(mapped, target);
  }
  EXPECT_GT(traced, 100u);
}

TEST(Rendering, TreesValidateAndTranslationInverts) {
  const auto& o = grammar().ontology();
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto r = grammar().render(sample_scene(s, o));
    ASSERT_NO_THROW(validate_constituency_tree(r.pivot_tree, &r.pivot.tokens));
    ASSERT_NO_THROW(validate_constituency_tree(r.target_tree, &r.target.tokens));
    ASSERT_EQ(grammar().translate_to_pivot(r.target), r.pivot);
    ASSERT_EQ(grammar().translate_to_target(r.pivot), r.target);
    ASSERT_EQ(grammar().parse_tree(r.pivot), r.pivot_tree);
    ASSERT_EQ(grammar().parse_tree(r.target), r.target_tree);
  }
}

TEST(Rendering, ParserRecoversSceneGraph) {
  const auto& o = grammar().ontology();
  for (std::uint64_t s = 0; s < 300; ++s) {
    const auto r = grammar().render(sample_scene(s, o));
    EXPECT_EQ(sg_coincidence(grammar().derive_scene_graph(r.pivot), r.language_sg), 1.0);
    EXPECT_EQ(sg_coincidence(grammar().derive_scene_graph(r.target), r.language_sg), 1.0);
  }
}

TEST(Rendering, EmptyCaptionParsesToFragment) {
  const auto t = grammar().parse_tree({Language::kPivot, {}});
  EXPECT_EQ(sc_nodes_by_depth(t).front().first, "FRAG");
  EXPECT_NO_THROW(validate_constituency_tree(t));
}

TEST(Dataset, GoldAlignment) {
  CorpusSpec spec;
  spec.caption_pairs = 300;
  spec.parallel_pairs = 300;
  spec.test_pairs = 300;
  const Dataset d = generate_dataset(spec, grammar());
  for (const auto* split : {&d.caption, &d.test})
    for (const auto& e : *split) EXPECT_EQ(sg_coincidence(e.visual_sg, e.language_sg), 1.0);
}

TEST(Dataset, SplitsUseDisjointSeeds) {
  CorpusSpec spec;
  std::set<std::uint64_t> seen;
  std::size_t total = 0;
  for (const char* split : {"caption", "parallel", "test"})
    for (std::size_t i = 0; i < 500; ++i, ++total) seen.insert(scene_seed(spec, split, i));
  EXPECT_EQ(seen.size(), total);
}

TEST(Dataset, EmitWritesCountsAndManifest) {
  CorpusSpec spec;
  spec.caption_pairs = 100;
  spec.parallel_pairs = 100;
  spec.test_pairs = 7;
  const fs::path dir = fresh_dir("emit");
  const fs::path manifest = emit_dataset(spec, grammar(), dir);
  const auto files = manifest_files(manifest);
  EXPECT_EQ(files.front(), manifest);
  std::set<fs::path> on_disk;
  for (const auto& e : fs::directory_iterator(dir)) on_disk.insert(e.path());
  EXPECT_EQ(std::set<fs::path>(files.begin(), files.end()), on_disk);
  for (const auto& f : files) {
    if (f == manifest) continue;
    const std::string name = f.filename().string();
    EXPECT_EQ(line_count(f), name.rfind("test.", 0) == 0 ? 7u : 100u) << name;
  }
  const CorpusSpec back = manifest_spec(manifest);
  EXPECT_EQ(back.caption_pairs, 100u);
  EXPECT_EQ(back.test_pairs, 7u);
  EXPECT_EQ(back.features.width, spec.features.width);
}

TEST(Dataset, ReEmissionIsByteIdentical) {
  CorpusSpec spec;
  spec.caption_pairs = 40;
  spec.parallel_pairs = 40;
  spec.test_pairs = 10;
  spec.seed = 9;
  const auto a = manifest_files(emit_dataset(spec, grammar(), fresh_dir("emit_a")));
  const auto b = manifest_files(emit_dataset(spec, grammar(), fresh_dir("emit_b")));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(slurp(a[i]), slurp(b[i])) << a[i];
}

TEST(Dataset, LoadMatchesGenerate) {
  CorpusSpec spec;
  spec.caption_pairs = 20;
  spec.parallel_pairs = 20;
  spec.test_pairs = 5;
  const Dataset g = generate_dataset(spec, grammar());
  const Dataset l = load_dataset(emit_dataset(spec, grammar(), fresh_dir("load")));
  ASSERT_EQ(l.caption.size(), 20u);
  ASSERT_EQ(l.test.size(), 5u);
  EXPECT_EQ(l.feature_width, g.feature_width);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(l.caption[i].visual_sg, g.caption[i].visual_sg);
    EXPECT_EQ(l.parallel[i].target_tree, g.parallel[i].target_tree);
  }
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(l.test[i].target, g.test[i].target);
}

TEST(Dataset, MissingManifestNamesPath) {
  try {
    load_dataset("/nonexistent/manifest.json");
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/manifest.json"), std::string::npos) << e.what();
  }
}
