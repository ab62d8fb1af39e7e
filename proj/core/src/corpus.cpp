#include "pivotcap/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include <json.hpp>

#include "pivotcap/nn.hpp"

namespace pivotcap {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Ontology

namespace {

enum Category { kPerson, kAnimal, kItem, kClothing, kVehicle, kFurniture, kPlant, kGround, kBuilding };

struct ObjectSpec {
  const char* label;
  Category category;
  std::vector<const char*> attributes;
};

const std::vector<ObjectSpec>& object_specs() {
  static const std::vector<ObjectSpec> specs = {
      {"girl", kPerson, {"young", "small", "tall"}},
      {"boy", kPerson, {"young", "small", "tall"}},
      {"man", kPerson, {"young", "tall", "big"}},
      {"woman", kPerson, {"young", "tall", "small"}},
      {"dog", kAnimal, {"white", "black", "brown", "small", "big", "young"}},
      {"cat", kAnimal, {"white", "black", "brown", "small", "young"}},
      {"horse", kAnimal, {"white", "black", "brown", "big", "young"}},
      {"bird", kAnimal, {"white", "black", "red", "small"}},
      {"ball", kItem, {"white", "red", "green", "small", "big"}},
      {"kite", kItem, {"white", "red", "green", "black", "big"}},
      {"hat", kClothing, {"white", "black", "red", "brown", "small"}},
      {"shirt", kClothing, {"white", "black", "red", "green"}},
      {"car", kVehicle, {"white", "black", "red", "small", "big"}},
      {"bike", kVehicle, {"black", "red", "green", "small"}},
      {"bench", kFurniture, {"wooden", "brown", "white", "green"}},
      {"table", kFurniture, {"wooden", "brown", "white", "small", "big"}},
      {"tree", kPlant, {"green", "tall", "small", "big"}},
      {"grass", kGround, {"green", "brown"}},
      {"street", kGround, {"black", "big"}},
      {"house", kBuilding, {"white", "red", "wooden", "big", "small", "tall"}},
  };
  return specs;
}

const std::vector<std::string> kAttributes = {"white", "black", "red",   "brown",  "green",
                                              "young", "small", "big",   "wooden", "tall"};
const std::vector<std::string> kRelations = {"riding", "holding", "wearing", "watching",
                                             "near",   "on",      "under",   "behind"};

bool in(Category c, std::initializer_list<Category> set) { return std::find(set.begin(), set.end(), c) != set.end(); }

bool relation_fits(const std::string& rel, const ObjectSpec& s, const ObjectSpec& o) {
  const std::string subj = s.label;
  const std::string obj = o.label;
  if (rel == "near") return true;
  if (rel == "riding") return s.category == kPerson && (o.category == kVehicle || obj == "horse");
  if (rel == "holding") return s.category == kPerson && (in(o.category, {kItem, kClothing}) || obj == "cat" || obj == "bird");
  if (rel == "wearing") return s.category == kPerson && o.category == kClothing;
  if (rel == "watching") return in(s.category, {kPerson, kAnimal}) && in(o.category, {kPerson, kAnimal, kItem, kVehicle});
  if (rel == "on") {
    return in(s.category, {kPerson, kAnimal, kItem, kClothing, kVehicle}) && in(o.category, {kFurniture, kGround});
  }
  if (rel == "under") return in(s.category, {kPerson, kAnimal, kItem, kVehicle, kFurniture}) && o.category == kPlant;
  if (rel == "behind") {
    return !in(s.category, {kGround}) && in(o.category, {kPerson, kVehicle, kBuilding, kPlant, kFurniture});
  }
  return false;
}

}  // namespace

SceneOntology SceneOntology::standard() {
  SceneOntology o;
  for (const auto& s : object_specs()) o.objects.push_back(s.label);
  o.attributes = kAttributes;
  o.relations = kRelations;
  for (const auto& s : object_specs()) {
    std::vector<std::size_t> ids;
    for (const char* a : s.attributes)
      ids.push_back(static_cast<std::size_t>(std::find(kAttributes.begin(), kAttributes.end(), a) - kAttributes.begin()));
    std::sort(ids.begin(), ids.end());
    o.object_attributes.push_back(std::move(ids));
  }
  const std::size_t n = o.objects.size();
  for (const auto& rel : kRelations) {
    std::vector<bool> table(n * n, false);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t t = 0; t < n; ++t)
        table[s * n + t] = s != t && relation_fits(rel, object_specs()[s], object_specs()[t]);
    o.allowed_relation.push_back(std::move(table));
  }
  o.validate();
  return o;
}

SceneOntology SceneOntology::single_object(const std::string& label) {
  SceneOntology o;
  o.objects = {label};
  o.attributes = kAttributes;
  o.relations = kRelations;
  o.object_attributes = {{0, 6, 7}};
  o.allowed_relation.assign(kRelations.size(), std::vector<bool>{false});
  o.validate();
  return o;
}

bool SceneOntology::relation_allowed(std::size_t relation, std::size_t subject, std::size_t object) const {
  return allowed_relation.at(relation).at(subject * objects.size() + object);
}

void SceneOntology::validate() const {
  if (objects.empty()) throw ConfigError("ontology: no object labels");
  if (object_attributes.size() != objects.size()) throw ConfigError("ontology: attribute table size mismatch");
  for (const auto& ids : object_attributes)
    for (auto a : ids)
      if (a >= attributes.size()) throw ConfigError("ontology: attribute index " + std::to_string(a) + " out of range");
  if (allowed_relation.size() != relations.size()) throw ConfigError("ontology: relation table size mismatch");
  for (const auto& t : allowed_relation)
    if (t.size() != objects.size() * objects.size()) throw ConfigError("ontology: relation table has wrong size");
  std::set<std::string> all(objects.begin(), objects.end());
  all.insert(attributes.begin(), attributes.end());
  all.insert(relations.begin(), relations.end());
  if (all.size() != objects.size() + attributes.size() + relations.size()) {
    throw ConfigError("ontology: labels must be distinct across objects, attributes and relations");
  }
}

// ---------------------------------------------------------------------------
// Scenes

Scene sample_scene(std::uint64_t seed, const SceneOntology& ontology) {
  Rng rng(mix_seed(seed, 0x5ce4e));
  const std::size_t n_obj = std::min<std::size_t>(2 + rng.below(4), ontology.objects.size());
  std::vector<std::size_t> pool(ontology.objects.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
  for (std::size_t i = 0; i < n_obj; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  std::vector<std::size_t> labels(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_obj));
  std::sort(labels.begin(), labels.end());

  Scene scene;
  for (auto label : labels) {
    SceneObject obj{label, {}};
    std::vector<std::size_t> allowed = ontology.object_attributes[label];
    const std::size_t k = std::min<std::size_t>(rng.below(3), allowed.size());
    for (std::size_t i = 0; i < k; ++i) std::swap(allowed[i], allowed[i + rng.below(allowed.size() - i)]);
    obj.attributes.assign(allowed.begin(), allowed.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(obj.attributes.begin(), obj.attributes.end());
    scene.objects.push_back(std::move(obj));
  }

  if (n_obj >= 2) {
    const std::size_t want = 1 + rng.below(3);
    std::set<std::pair<std::size_t, std::size_t>> used;
    for (std::size_t attempt = 0; attempt < 32 && scene.relations.size() < want; ++attempt) {
      const std::size_t s = rng.below(n_obj);
      std::size_t o = rng.below(n_obj - 1);
      if (o >= s) ++o;
      if (used.count({std::min(s, o), std::max(s, o)})) continue;
      std::vector<std::size_t> options;
      for (std::size_t r = 0; r < ontology.relations.size(); ++r)
        if (ontology.relation_allowed(r, labels[s], labels[o])) options.push_back(r);
      if (options.empty()) continue;
      scene.relations.push_back({s, options[rng.below(options.size())], o});
      used.insert({std::min(s, o), std::max(s, o)});
    }
    std::sort(scene.relations.begin(), scene.relations.end());
  }
  return scene;
}

SceneGraph scene_to_graph(const Scene& scene, const SceneOntology& ontology) {
  SceneGraph g;
  for (const auto& obj : scene.objects) g.nodes.push_back({g.nodes.size(), ontology.objects.at(obj.label), SgNodeKind::kObject});
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    for (auto a : scene.objects[i].attributes) {
      const std::size_t id = g.nodes.size();
      g.nodes.push_back({id, ontology.attributes.at(a), SgNodeKind::kAttribute});
      g.edges.push_back({i, id});
    }
  }
  for (const auto& rel : scene.relations) {
    const std::size_t id = g.nodes.size();
    g.nodes.push_back({id, ontology.relations.at(rel.relation), SgNodeKind::kRelation});
    g.edges.push_back({rel.subject, id});
    g.edges.push_back({id, rel.object});
  }
  return g;
}

namespace {
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace

std::vector<double> label_feature(const std::string& label, const FeatureSpec& spec) {
  if (spec.width == 0) throw ConfigError("feature width must be positive");
  Rng rng(mix_seed(spec.seed, fnv1a(fold_case(label)), 0xfea7));
  const double s = 1.0 / std::sqrt(static_cast<double>(spec.width));
  std::vector<double> v(spec.width);
  for (auto& x : v) x = rng.normal() * s;
  return v;
}

SceneGraph derive_scene_graph(const Scene& scene, const SceneOntology& ontology, const FeatureSpec& spec,
                              std::uint64_t noise_seed) {
  if (spec.noise_sigma < 0.0) throw ConfigError("feature noise sigma must be non-negative");
  SceneGraph g = scene_to_graph(scene, ontology);
  Rng noise(mix_seed(noise_seed, 0x4015e));
  for (const auto& node : g.nodes) {
    auto row = label_feature(node.label, spec);
    if (spec.noise_sigma > 0.0)
      for (auto& x : row) x += spec.noise_sigma * noise.normal();
    g.features.push_back(std::move(row));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Grammar pair

namespace {

std::vector<std::string> pseudo_words(std::size_t count, const std::set<std::string>& avoid) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  std::vector<std::string> all;
  for (char c1 : consonants)
    for (char v1 : vowels)
      for (char c2 : consonants)
        for (char v2 : vowels) all.push_back(std::string{c1, v1, c2, v2});
  Rng rng(0x7a47e7);
  for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.below(i)]);
  std::vector<std::string> out;
  for (const auto& w : all) {
    if (out.size() == count) break;
    if (!avoid.count(w)) out.push_back(w);
  }
  if (out.size() < count) throw ConfigError("grammar: lexicon too large for the pseudo-word inventory");
  return out;
}

}  // namespace

ToyGrammarPair::ToyGrammarPair(SceneOntology ontology) : ontology_(std::move(ontology)) {
  ontology_.validate();
  pivot_words_ = {kDeterminer, kConjunction};
  for (std::size_t i = 0; i < ontology_.objects.size(); ++i) {
    object_index_[ontology_.objects[i]] = i;
    pivot_words_.push_back(ontology_.objects[i]);
  }
  for (std::size_t i = 0; i < ontology_.attributes.size(); ++i) {
    attribute_index_[ontology_.attributes[i]] = i;
    pivot_words_.push_back(ontology_.attributes[i]);
  }
  for (std::size_t i = 0; i < ontology_.relations.size(); ++i) {
    relation_index_[ontology_.relations[i]] = i;
    pivot_words_.push_back(ontology_.relations[i]);
  }
  std::set<std::string> seen(pivot_words_.begin(), pivot_words_.end());
  if (seen.size() != pivot_words_.size()) throw ConfigError("grammar: pivot lexicon has duplicate words");
  const auto target = pseudo_words(pivot_words_.size(), seen);
  for (std::size_t i = 0; i < pivot_words_.size(); ++i) {
    to_target_[pivot_words_[i]] = target[i];
    to_pivot_[target[i]] = pivot_words_[i];
  }
}

std::string ToyGrammarPair::to_target_word(const std::string& pivot_word) const {
  auto it = to_target_.find(pivot_word);
  return it == to_target_.end() ? "<unk>" : it->second;
}

std::string ToyGrammarPair::to_pivot_word(const std::string& target_word) const {
  auto it = to_pivot_.find(target_word);
  return it == to_pivot_.end() ? "<unk>" : it->second;
}

std::string ToyGrammarPair::word(const std::string& pivot_word, Language lang) const {
  return lang == Language::kPivot ? pivot_word : to_target_word(pivot_word);
}

std::vector<std::string> ToyGrammarPair::pivot_lexicon() const { return pivot_words_; }

std::vector<std::string> ToyGrammarPair::target_lexicon() const {
  std::vector<std::string> out;
  for (const auto& w : pivot_words_) out.push_back(to_target_word(w));
  return out;
}

std::vector<std::string> ToyGrammarPair::phrase_labels() { return {"S", "CL", "NP", "VP", "ADJP", "FRAG"}; }

std::vector<std::string> ToyGrammarPair::render_np(const NounPhrase& np, Language lang) const {
  std::vector<std::string> out{word(kDeterminer, lang)};
  if (lang == Language::kPivot) {
    for (auto a : np.attributes) out.push_back(ontology_.attributes[a]);
    out.push_back(ontology_.objects[np.noun]);
  } else {
    out.push_back(word(ontology_.objects[np.noun], lang));
    for (auto a : np.attributes) out.push_back(word(ontology_.attributes[a], lang));
  }
  return out;
}

void ToyGrammarPair::build_np(TreeBuilder& b, std::size_t parent, const NounPhrase& np, Language lang) const {
  const std::size_t node = b.phrase("NP", parent);
  b.word(word(kDeterminer, lang), node);
  if (lang == Language::kPivot) {
    for (auto a : np.attributes) b.word(ontology_.attributes[a], node);
    b.word(ontology_.objects[np.noun], node);
  } else {
    b.word(word(ontology_.objects[np.noun], lang), node);
    if (!np.attributes.empty()) {
      const std::size_t adjp = b.phrase("ADJP", node);
      for (auto a : np.attributes) b.word(word(ontology_.attributes[a], lang), adjp);
    }
  }
}

std::vector<ToyGrammarPair::Chunk> ToyGrammarPair::scene_chunks(const Scene& scene) const {
  std::vector<Chunk> chunks;
  std::vector<bool> mentioned(scene.objects.size(), false);
  auto np_of = [&](std::size_t i) { return NounPhrase{scene.objects[i].label, scene.objects[i].attributes}; };
  for (const auto& rel : scene.relations) {
    Chunk c;
    c.kind = Chunk::Kind::kClause;
    c.subject = np_of(rel.subject);
    c.relation = rel.relation;
    c.object = np_of(rel.object);
    mentioned[rel.subject] = mentioned[rel.object] = true;
    chunks.push_back(std::move(c));
  }
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (mentioned[i]) continue;
    Chunk c;
    c.kind = Chunk::Kind::kPhrase;
    c.subject = np_of(i);
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::vector<std::string> ToyGrammarPair::render_chunks(const std::vector<Chunk>& chunks, Language lang) const {
  std::vector<std::string> out;
  for (const auto& c : chunks) {
    std::vector<std::string> words;
    if (c.kind == Chunk::Kind::kFragment) {
      words = c.words;
    } else if (c.kind == Chunk::Kind::kPhrase) {
      words = render_np(c.subject, lang);
    } else {
      auto s = render_np(c.subject, lang);
      auto o = render_np(c.object, lang);
      const std::string r = word(ontology_.relations[c.relation], lang);
      words = s;
      if (lang == Language::kPivot) {
        words.push_back(r);
        words.insert(words.end(), o.begin(), o.end());
      } else {
        words.insert(words.end(), o.begin(), o.end());
        words.push_back(r);
      }
    }
    if (words.empty()) continue;
    if (!out.empty()) out.push_back(word(kConjunction, lang));
    out.insert(out.end(), words.begin(), words.end());
  }
  return out;
}

ConstituencyTree ToyGrammarPair::build_tree(const std::vector<Chunk>& chunks, Language lang) const {
  TreeBuilder b;
  const std::size_t root = b.phrase("S");
  bool any = false;
  for (std::size_t k = 0; k < chunks.size(); ++k) {
    if (k > 0) {
      b.word(word(kConjunction, lang), root);
      any = true;
    }
    const auto& c = chunks[k];
    if (c.kind == Chunk::Kind::kFragment) {
      if (c.words.empty()) continue;
      const std::size_t f = b.phrase("FRAG", root);
      for (const auto& w : c.words) b.word(w, f);
    } else if (c.kind == Chunk::Kind::kPhrase) {
      build_np(b, root, c.subject, lang);
    } else {
      const std::size_t cl = b.phrase("CL", root);
      build_np(b, cl, c.subject, lang);
      const std::size_t vp = b.phrase("VP", cl);
      const std::string r = word(ontology_.relations[c.relation], lang);
      if (lang == Language::kPivot) {
        b.word(r, vp);
        build_np(b, vp, c.object, lang);
      } else {
        build_np(b, vp, c.object, lang);
        b.word(r, vp);
      }
    }
    any = true;
  }
  if (!any) {
    TreeBuilder empty;
    empty.word("<unk>", empty.phrase("FRAG"));
    return std::move(empty).build();
  }
  return std::move(b).build();
}

RenderedCaptions ToyGrammarPair::render(const Scene& scene) const {
  const auto chunks = scene_chunks(scene);
  RenderedCaptions out;
  out.pivot = {Language::kPivot, render_chunks(chunks, Language::kPivot)};
  out.pivot_tree = build_tree(chunks, Language::kPivot);
  out.target = {Language::kTarget, render_chunks(chunks, Language::kTarget)};
  out.target_tree = build_tree(chunks, Language::kTarget);
  out.language_sg = scene_to_graph(scene, ontology_);
  return out;
}

std::optional<ToyGrammarPair::NounPhrase> ToyGrammarPair::parse_np(const std::vector<std::string>& words,
                                                                    std::size_t& pos, Language lang) const {
  std::size_t p = pos;
  auto pivot_of = [&](std::size_t i) { return lang == Language::kPivot ? words[i] : to_pivot_word(words[i]); };
  if (p >= words.size() || pivot_of(p) != kDeterminer) return std::nullopt;
  ++p;
  NounPhrase np{0, {}};
  if (lang == Language::kPivot) {
    while (p < words.size() && attribute_index_.count(words[p])) np.attributes.push_back(attribute_index_.at(words[p++]));
    if (p >= words.size() || !object_index_.count(words[p])) return std::nullopt;
    np.noun = object_index_.at(words[p++]);
  } else {
    if (p >= words.size() || !object_index_.count(pivot_of(p))) return std::nullopt;
    np.noun = object_index_.at(pivot_of(p++));
    while (p < words.size() && attribute_index_.count(pivot_of(p)))
      np.attributes.push_back(attribute_index_.at(pivot_of(p++)));
  }
  pos = p;
  return np;
}

std::vector<ToyGrammarPair::Chunk> ToyGrammarPair::chunk(const Caption& caption) const {
  const std::string conj = word(kConjunction, caption.lang);
  std::vector<std::vector<std::string>> pieces(1);
  for (const auto& t : caption.tokens) {
    if (t == conj) {
      pieces.emplace_back();
    } else {
      pieces.back().push_back(t);
    }
  }
  std::vector<Chunk> chunks;
  for (auto& words : pieces) {
    Chunk c;
    c.kind = Chunk::Kind::kFragment;
    std::size_t pos = 0;
    if (auto s = parse_np(words, pos, caption.lang)) {
      if (pos == words.size()) {
        c.kind = Chunk::Kind::kPhrase;
        c.subject = *s;
      } else if (caption.lang == Language::kPivot) {
        if (relation_index_.count(words[pos])) {
          const std::size_t r = relation_index_.at(words[pos]);
          std::size_t p2 = pos + 1;
          auto o = parse_np(words, p2, caption.lang);
          if (o && p2 == words.size()) {
            c = Chunk{Chunk::Kind::kClause, *s, r, *o, {}};
          }
        }
      } else {
        std::size_t p2 = pos;
        auto o = parse_np(words, p2, caption.lang);
        if (o && p2 + 1 == words.size() && relation_index_.count(to_pivot_word(words[p2]))) {
          c = Chunk{Chunk::Kind::kClause, *s, relation_index_.at(to_pivot_word(words[p2])), *o, {}};
        }
      }
    }
    if (c.kind == Chunk::Kind::kFragment) c.words = std::move(words);
    chunks.push_back(std::move(c));
  }
  return chunks;
}

ConstituencyTree ToyGrammarPair::parse_tree(const Caption& caption) const {
  return build_tree(chunk(caption), caption.lang);
}

Scene ToyGrammarPair::parse_scene(const Caption& caption) const {
  const auto chunks = chunk(caption);
  std::map<std::size_t, std::set<std::size_t>> objects;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> triples;
  auto note = [&](const NounPhrase& np) { objects[np.noun].insert(np.attributes.begin(), np.attributes.end()); };
  for (const auto& c : chunks) {
    if (c.kind == Chunk::Kind::kFragment) continue;
    note(c.subject);
    if (c.kind == Chunk::Kind::kClause) {
      note(c.object);
      if (c.subject.noun != c.object.noun) triples.insert({c.subject.noun, c.relation, c.object.noun});
    }
  }
  Scene scene;
  std::map<std::size_t, std::size_t> position;
  for (const auto& [label, attrs] : objects) {
    position[label] = scene.objects.size();
    scene.objects.push_back({label, std::vector<std::size_t>(attrs.begin(), attrs.end())});
  }
  for (const auto& [s, r, o] : triples) scene.relations.push_back({position[s], r, position[o]});
  std::sort(scene.relations.begin(), scene.relations.end());
  return scene;
}

SceneGraph ToyGrammarPair::derive_scene_graph(const Caption& caption) const {
  return scene_to_graph(parse_scene(caption), ontology_);
}

Caption ToyGrammarPair::translate_to_target(const Caption& pivot) const {
  auto chunks = chunk(pivot);
  for (auto& c : chunks)
    for (auto& w : c.words) w = to_target_word(w);
  return {Language::kTarget, render_chunks(chunks, Language::kTarget)};
}

Caption ToyGrammarPair::translate_to_pivot(const Caption& target) const {
  auto chunks = chunk(target);
  for (auto& c : chunks)
    for (auto& w : c.words) w = to_pivot_word(w);
  return {Language::kPivot, render_chunks(chunks, Language::kPivot)};
}

// ---------------------------------------------------------------------------
// Dataset

Example make_example(std::uint64_t seed, const ToyGrammarPair& grammar, const FeatureSpec& features) {
  const Scene scene = sample_scene(seed, grammar.ontology());
  auto r = grammar.render(scene);
  Example ex;
  ex.visual_sg = derive_scene_graph(scene, grammar.ontology(), features, mix_seed(seed, 0x1ab));
  ex.language_sg = std::move(r.language_sg);
  ex.pivot = std::move(r.pivot);
  ex.pivot_tree = std::move(r.pivot_tree);
  ex.target = std::move(r.target);
  ex.target_tree = std::move(r.target_tree);
  return ex;
}

namespace {
const std::vector<std::string> kSplits = {"caption", "parallel", "test"};

std::uint64_t split_offset(const std::string& split) {
  if (split == "caption") return 0;
  if (split == "parallel") return 1000000;
  if (split == "test") return 2000000;
  throw ConfigError("unknown split \"" + split + "\"");
}
}  // namespace

std::uint64_t scene_seed(const CorpusSpec& spec, const std::string& split, std::size_t index) {
  if (index >= 1000000) throw ConfigError("split " + split + " is limited to 1000000 examples");
  return spec.seed * 10000000ULL + split_offset(split) + index;
}

Dataset generate_dataset(const CorpusSpec& spec, const ToyGrammarPair& grammar) {
  Dataset d;
  d.feature_width = spec.features.width;
  for (std::size_t i = 0; i < spec.caption_pairs; ++i) {
    Example ex = make_example(scene_seed(spec, "caption", i), grammar, spec.features);
    ex.target = Caption{Language::kTarget, {}};
    ex.target_tree = {};
    d.caption.push_back(std::move(ex));
  }
  for (std::size_t i = 0; i < spec.parallel_pairs; ++i) {
    Example ex = make_example(scene_seed(spec, "parallel", i), grammar, spec.features);
    ex.visual_sg = {};
    d.parallel.push_back(std::move(ex));
  }
  for (std::size_t i = 0; i < spec.test_pairs; ++i)
    d.test.push_back(make_example(scene_seed(spec, "test", i), grammar, spec.features));
  return d;
}

namespace {

struct FileRole {
  const char* role;
  const char* side;
};

std::vector<FileRole> roles_for(const std::string& split) {
  if (split == "caption") return {{"sg", "visual"}, {"sg", "language"}, {"sc", "pivot"}, {"caption", "pivot"}};
  if (split == "parallel") {
    return {{"sg", "language"}, {"sc", "pivot"}, {"sc", "target"}, {"caption", "pivot"}, {"caption", "target"}};
  }
  return {{"sg", "visual"}, {"sg", "language"}, {"sc", "pivot"}, {"sc", "target"}, {"caption", "pivot"},
          {"caption", "target"}};
}

Record record_for(const Example& ex, const std::string& role, const std::string& side) {
  if (role == "sg") return side == "visual" ? Record{ex.visual_sg} : Record{ex.language_sg};
  if (role == "sc") return side == "pivot" ? Record{ex.pivot_tree} : Record{ex.target_tree};
  return side == "pivot" ? Record{ex.pivot} : Record{ex.target};
}

json read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": malformed manifest: " + e.what());
  }
  if (!m.is_object() || m.value("schema", "") != kManifestSchema) {
    throw SchemaError(path.string() + ": manifest schema must be \"" + std::string(kManifestSchema) + "\"");
  }
  if (!m.contains("splits") || !m["splits"].is_object()) throw SchemaError(path.string() + ": missing field \"splits\"");
  return m;
}

}  // namespace

std::filesystem::path emit_dataset(const CorpusSpec& spec, const ToyGrammarPair& grammar,
                                   const std::filesystem::path& out_dir) {
  if (spec.caption_pairs == 0 || spec.parallel_pairs == 0 || spec.test_pairs == 0) {
    throw ConfigError("corpus counts must be positive");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());
  const Dataset d = generate_dataset(spec, grammar);
  json manifest = {{"schema", kManifestSchema},
                   {"seed", spec.seed},
                   {"feature_width", spec.features.width},
                   {"noise_sigma", spec.features.noise_sigma},
                   {"feature_seed", spec.features.seed},
                   {"splits", json::object()}};
  for (const auto& split : kSplits) {
    const auto& examples = split == "caption" ? d.caption : split == "parallel" ? d.parallel : d.test;
    json files = json::object();
    for (const auto& fr : roles_for(split)) {
      const std::string name = split + "." + fr.role + "." + fr.side + ".jsonl";
      std::vector<Record> records;
      for (const auto& ex : examples) records.push_back(record_for(ex, fr.role, fr.side));
      write_jsonl(out_dir / name, records);
      files[fr.role][fr.side] = name;
    }
    manifest["splits"][split] = {{"count", examples.size()}, {"files", files}};
  }
  const auto path = out_dir / "manifest.json";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << manifest.dump(2) << "\n";
  if (!out) throw Error("write failed for " + path.string());
  return path;
}

CorpusSpec manifest_spec(const std::filesystem::path& manifest_path) {
  const json m = read_manifest(manifest_path);
  CorpusSpec spec;
  try {
    spec.seed = m.at("seed").get<std::uint64_t>();
    spec.features.width = m.at("feature_width").get<std::size_t>();
    spec.features.noise_sigma = m.at("noise_sigma").get<double>();
    spec.features.seed = m.at("feature_seed").get<std::uint64_t>();
    spec.caption_pairs = m["splits"].at("caption").at("count").get<std::size_t>();
    spec.parallel_pairs = m["splits"].at("parallel").at("count").get<std::size_t>();
    spec.test_pairs = m["splits"].at("test").at("count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw SchemaError(manifest_path.string() + ": " + e.what());
  }
  return spec;
}

std::vector<std::filesystem::path> manifest_files(const std::filesystem::path& manifest_path) {
  const json m = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  std::vector<std::filesystem::path> out{manifest_path};
  for (const auto& split : kSplits) {
    if (!m["splits"].contains(split)) continue;
    for (const auto& [role, sides] : m["splits"][split]["files"].items())
      for (const auto& [side, name] : sides.items()) out.push_back(dir / name.get<std::string>());
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const json m = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  Dataset d;
  d.feature_width = m.value("feature_width", std::size_t{0});
  for (const auto& split : kSplits) {
    if (!m["splits"].contains(split)) throw SchemaError(manifest_path.string() + ": missing split \"" + split + "\"");
    const json& entry = m["splits"][split];
    const std::size_t count = entry.at("count").get<std::size_t>();
    std::vector<Example> examples(count);
    for (auto& ex : examples) ex.target.lang = Language::kTarget;
    for (const auto& [role, sides] : entry.at("files").items()) {
      for (const auto& [side, name] : sides.items()) {
        const auto path = dir / name.get<std::string>();
        auto check = [&](std::size_t n) {
          if (n != count) {
            throw SchemaError(path.string() + ": " + std::to_string(n) + " records, manifest says " +
                              std::to_string(count));
          }
        };
        if (role == "sg") {
          auto rs = read_jsonl_as<SceneGraph>(path);
          check(rs.size());
          for (std::size_t i = 0; i < count; ++i) (side == "visual" ? examples[i].visual_sg : examples[i].language_sg) = std::move(rs[i]);
        } else if (role == "sc") {
          auto rs = read_jsonl_as<ConstituencyTree>(path);
          check(rs.size());
          for (std::size_t i = 0; i < count; ++i) (side == "pivot" ? examples[i].pivot_tree : examples[i].target_tree) = std::move(rs[i]);
        } else if (role == "caption") {
          auto rs = read_jsonl_as<Caption>(path);
          check(rs.size());
          for (std::size_t i = 0; i < count; ++i) (side == "pivot" ? examples[i].pivot : examples[i].target) = std::move(rs[i]);
        } else {
          throw SchemaError(manifest_path.string() + ": unknown file role \"" + role + "\"");
        }
      }
    }
    (split == "caption" ? d.caption : split == "parallel" ? d.parallel : d.test) = std::move(examples);
  }
  return d;
}

}  // namespace pivotcap
