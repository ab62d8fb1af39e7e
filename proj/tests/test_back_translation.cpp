#include <gtest/gtest.h>

#include <cmath>

#include "pivotcap/back_translation.hpp"
#include "pivotcap/ops.hpp"

using namespace pivotcap;

namespace {

const ToyGrammarPair& grammar() {
  static const ToyGrammarPair g(SceneOntology::standard());
  return g;
}

struct Toy {
  Dataset data;
  std::unique_ptr<PivotCaptioner> model;

  explicit Toy(std::uint64_t seed) {
    CorpusSpec spec;
    spec.caption_pairs = 6;
    spec.parallel_pairs = 6;
    spec.test_pairs = 2;
    data = generate_dataset(spec, grammar());
    ModelConfig mc;
    mc.dim = 8;
    mc.ff_dim = 16;
    mc.max_len = 10;
    model = std::make_unique<PivotCaptioner>(mc, Vocabularies::from_dataset(data), data.feature_width, seed);
    Rng rng(seed);
    for (const auto& p : model->store().params())
      for (auto& v : p.tensor.node()->value) v = rng.uniform(-1, 1);
  }

  std::vector<const Example*> batch(const std::vector<Example>& xs, std::size_t n) const {
    std::vector<const Example*> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(&xs[i]);
    return out;
  }
};

}  // namespace

TEST(Translators, DictionaryInvertsRendering) {
  const DictionaryTranslator t(grammar());
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto r = grammar().render(sample_scene(s, grammar().ontology()));
    EXPECT_EQ(t.translate(r.target), r.pivot);
  }
}

TEST(Translators, SubprocessSpeaksLines) {
  const auto t = make_translator("subprocess:cat", grammar());
  const Caption c = t->translate({Language::kTarget, {"zupa", "fago"}});
  EXPECT_EQ(c, (Caption{Language::kPivot, {"zupa", "fago"}}));
  EXPECT_EQ(t->translate({Language::kTarget, {"x"}}).tokens, std::vector<std::string>{"x"});
}

TEST(Translators, UnknownSpecIsConfigError) {
  EXPECT_THROW(make_translator("babel", grammar()), ConfigError);
  EXPECT_THROW(make_generator("camera", FeatureSpec{}), ConfigError);
}

TEST(Generators, LabelProjectionMatchesCorpusFeatures) {
  FeatureSpec spec;
  spec.noise_sigma = 0.0;
  const Scene sc = sample_scene(5, grammar().ontology());
  const SceneGraph g = derive_scene_graph(sc, grammar().ontology(), spec, 1);
  EXPECT_EQ(LabelProjectionGenerator(spec).generate(g), g.features);
}

TEST(Generators, SubprocessRowsAndErrors) {
  FeatureSpec spec;
  spec.width = 2;
  const auto gen = make_generator("subprocess:while read -r a b; do echo 0 1 2 3; done", spec);
  SceneGraph g;
  g.nodes = {{0, "dog", SgNodeKind::kObject}, {1, "red", SgNodeKind::kAttribute}};
  g.edges = {{0, 1}};
  EXPECT_EQ(gen->generate(g), (std::vector<std::vector<double>>{{0, 1}, {2, 3}}));
  spec.width = 3;
  const auto wrong = make_generator("subprocess:while read -r l; do echo 1; done", spec);
  EXPECT_THROW(wrong->generate(g), Error);
}

TEST(BackTranslation, RandomModelGivesFiniteNonNegativeLosses) {
  Toy toy(21);
  const DictionaryTranslator translator(grammar());
  const LabelProjectionGenerator generator(FeatureSpec{});
  const auto ipb = ipb_loss(*toy.model, toy.batch(toy.data.caption, 6), translator, grammar());
  const auto ptb = ptb_loss(*toy.model, toy.batch(toy.data.parallel, 6), generator, grammar());
  EXPECT_EQ(ipb.used + ipb.skipped, 6u);
  EXPECT_EQ(ptb.used + ptb.skipped, 6u);
  for (const auto& r : {ipb, ptb}) {
    EXPECT_TRUE(std::isfinite(r.loss.item()));
    EXPECT_GE(r.loss.item(), 0.0);
  }
}

TEST(BackTranslation, ImagePathTracedByHand) {
  Toy toy(22);
  const DictionaryTranslator translator(grammar());
  const auto batch = toy.batch(toy.data.caption, 2);
  double expected = 0.0;
  std::size_t used = 0;
  for (const Example* ex : batch) {
    NoGradGuard guard;
    const Caption pivot = toy.model->generate_pivot(ex->visual_sg);
    const Caption target = toy.model->generate_target(ex->visual_sg, grammar().parse_tree(pivot));
    if (target.tokens.empty()) continue;
    const Caption pseudo = grammar().translate_to_pivot(target);
    const SceneGraph g = grammar().derive_scene_graph(pseudo);
    if (pseudo.tokens.empty() || g.nodes.empty()) continue;
    expected += toy.model->caption_nll(g, ex->pivot).item();
    ++used;
  }
  const auto r = ipb_loss(*toy.model, batch, translator, grammar());
  ASSERT_EQ(r.used, used);
  if (used > 0) EXPECT_NEAR(r.loss.item(), expected / static_cast<double>(used), 1e-12);
}

TEST(BackTranslation, TextPathTracedByHand) {
  Toy toy(23);
  FeatureSpec spec;
  const LabelProjectionGenerator generator(spec);
  const auto batch = toy.batch(toy.data.parallel, 2);
  double expected = 0.0;
  std::size_t used = 0;
  for (const Example* ex : batch) {
    NoGradGuard guard;
    SceneGraph image = ex->language_sg;
    image.features.clear();
    for (const auto& n : image.nodes) image.features.push_back(label_feature(n.label, spec));
    const Caption pivot = toy.model->generate_pivot(image);
    if (pivot.tokens.empty()) continue;
    expected += toy.model->translation_nll(image, grammar().parse_tree(pivot), ex->target).item();
    ++used;
  }
  const auto r = ptb_loss(*toy.model, batch, generator, grammar());
  ASSERT_EQ(r.used, used);
  if (used > 0) EXPECT_NEAR(r.loss.item(), expected / static_cast<double>(used), 1e-12);
}

TEST(BackTranslation, UntrainedModelSkipsEverything) {
  // Zero output heads emit PAD first, so every generation is empty.
  CorpusSpec spec;
  spec.caption_pairs = 3;
  spec.parallel_pairs = 3;
  spec.test_pairs = 1;
  const Dataset d = generate_dataset(spec, grammar());
  ModelConfig mc;
  mc.dim = 8;
  mc.ff_dim = 16;
  PivotCaptioner m(mc, Vocabularies::from_dataset(d), d.feature_width, 1);
  const std::vector<const Example*> b = {&d.caption[0], &d.caption[1]};
  const auto r = ipb_loss(m, b, DictionaryTranslator(grammar()), grammar());
  EXPECT_EQ(r.used, 0u);
  EXPECT_EQ(r.skipped, 2u);
  EXPECT_EQ(r.loss.item(), 0.0);
}
