#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <unordered_map>
#include <string>
#include <vector>

#include "pivotcap/structures.hpp"

namespace pivotcap {

// Closed inventory of object/attribute/relation labels plus the table of
// which attributes and relations may apply to which objects.
struct SceneOntology {
  std::vector<std::string> objects;
  std::vector<std::string> attributes;
  std::vector<std::string> relations;
  // Allowed attribute indices per object.
  std::vector<std::vector<std::size_t>> object_attributes;
  // allowed_relation[r][s * objects.size() + o]: relation r may link subject s to object o.
  std::vector<std::vector<bool>> allowed_relation;

  static SceneOntology standard();
  static SceneOntology single_object(const std::string& label);

  bool relation_allowed(std::size_t relation, std::size_t subject, std::size_t object) const;
  void validate() const;
};

struct SceneObject {
  std::size_t label = 0;                // ontology object index
  std::vector<std::size_t> attributes;  // ontology attribute indices, ascending

  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct SceneRelation {
  std::size_t subject = 0;  // index into Scene::objects
  std::size_t relation = 0;
  std::size_t object = 0;  // index into Scene::objects

  friend bool operator==(const SceneRelation&, const SceneRelation&) = default;
  friend auto operator<=>(const SceneRelation&, const SceneRelation&) = default;
};

// Objects have distinct labels and are sorted by label; relations are sorted
// by (subject, relation, object). Any scene built by this module is in this
// canonical order.
struct Scene {
  std::vector<SceneObject> objects;
  std::vector<SceneRelation> relations;

  friend bool operator==(const Scene&, const Scene&) = default;
};

// 2-5 objects (capped by the ontology), 0-2 attributes each, 1-3 relations
// when at least two objects exist.
Scene sample_scene(std::uint64_t seed, const SceneOntology& ontology);

// Objects first, then each object's attribute nodes, then relation nodes.
SceneGraph scene_to_graph(const Scene& scene, const SceneOntology& ontology);

struct FeatureSpec {
  std::size_t width = 16;
  double noise_sigma = 0.1;
  std::uint64_t seed = 1;
};

// Deterministic per-label feature vector (unit Gaussian entries scaled by
// 1/sqrt(width)).
std::vector<double> label_feature(const std::string& label, const FeatureSpec& spec);

// Scene graph plus one feature row per node: label feature + N(0, sigma^2)
// noise drawn from `noise_seed`.
SceneGraph derive_scene_graph(const Scene& scene, const SceneOntology& ontology, const FeatureSpec& spec,
                              std::uint64_t noise_seed);

struct RenderedCaptions {
  Caption pivot;
  ConstituencyTree pivot_tree;
  Caption target;
  ConstituencyTree target_tree;
  SceneGraph language_sg;
};

// Template grammars for the pivot and target languages over one ontology.
//
// Pivot clauses read "a [ATTR..] NOUN REL a [ATTR..] NOUN"; the target
// language maps every word through a bijective dictionary, places
// attributes after the noun inside an ADJP, and puts the relation word last
// (subject-object-verb). Clauses and stand-alone noun phrases are joined by
// the conjunction in both languages.
class ToyGrammarPair : public CaptionParser {
 public:
  explicit ToyGrammarPair(SceneOntology ontology);

  const SceneOntology& ontology() const { return ontology_; }

  RenderedCaptions render(const Scene& scene) const;

  // Phrasal labels: S, CL, NP, VP, ADJP, and FRAG for chunks outside the
  // grammar. An empty caption parses to (FRAG <unk>).
  ConstituencyTree parse_tree(const Caption& caption) const override;
  SceneGraph derive_scene_graph(const Caption& caption) const override;
  // The scene a caption describes; chunks outside the grammar contribute nothing.
  Scene parse_scene(const Caption& caption) const;

  // Chunk-wise dictionary transduction with constituent reordering.
  // Chunks outside the grammar are mapped word by word.
  Caption translate_to_pivot(const Caption& target) const;
  Caption translate_to_target(const Caption& pivot) const;

  std::string to_target_word(const std::string& pivot_word) const;
  std::string to_pivot_word(const std::string& target_word) const;

  std::vector<std::string> pivot_lexicon() const;
  std::vector<std::string> target_lexicon() const;
  static std::vector<std::string> phrase_labels();

  static constexpr const char* kDeterminer = "a";
  static constexpr const char* kConjunction = "and";

 private:
  struct NounPhrase {
    std::size_t noun;
    std::vector<std::size_t> attributes;
  };
  struct Chunk {
    enum class Kind { kClause, kPhrase, kFragment } kind = Kind::kFragment;
    NounPhrase subject{};
    std::size_t relation = 0;
    NounPhrase object{};
    std::vector<std::string> words;
  };

  std::vector<Chunk> chunk(const Caption& caption) const;
  std::optional<NounPhrase> parse_np(const std::vector<std::string>& words, std::size_t& pos, Language lang) const;
  std::vector<std::string> render_np(const NounPhrase& np, Language lang) const;
  void build_np(TreeBuilder& b, std::size_t parent, const NounPhrase& np, Language lang) const;
  ConstituencyTree build_tree(const std::vector<Chunk>& chunks, Language lang) const;
  std::vector<std::string> render_chunks(const std::vector<Chunk>& chunks, Language lang) const;
  std::vector<Chunk> scene_chunks(const Scene& scene) const;
  std::string word(const std::string& pivot_word, Language lang) const;

  SceneOntology ontology_;
  std::vector<std::string> pivot_words_;
  std::unordered_map<std::string, std::string> to_target_;
  std::unordered_map<std::string, std::string> to_pivot_;
  std::unordered_map<std::string, std::size_t> object_index_;
  std::unordered_map<std::string, std::size_t> attribute_index_;
  std::unordered_map<std::string, std::size_t> relation_index_;
};

// One paired record of the synthetic corpus.
struct Example {
  SceneGraph visual_sg;  // empty in the parallel split
  SceneGraph language_sg;
  Caption pivot;
  ConstituencyTree pivot_tree;
  Caption target;  // empty in the caption split
  ConstituencyTree target_tree;
};

Example make_example(std::uint64_t scene_seed, const ToyGrammarPair& grammar, const FeatureSpec& features);

struct CorpusSpec {
  std::size_t caption_pairs = 2000;
  std::size_t parallel_pairs = 2000;
  std::size_t test_pairs = 100;
  std::uint64_t seed = 1;
  FeatureSpec features;
};

// Scene seeds per split come from disjoint ranges.
std::uint64_t scene_seed(const CorpusSpec& spec, const std::string& split, std::size_t index);

struct Dataset {
  std::vector<Example> caption;
  std::vector<Example> parallel;
  std::vector<Example> test;
  std::size_t feature_width = 0;
};

Dataset generate_dataset(const CorpusSpec& spec, const ToyGrammarPair& grammar);

inline constexpr const char* kManifestSchema = "pivotcap.manifest/1";

// Writes one JSONL file per (split, role, side) plus manifest.json and
// returns the manifest path.
std::filesystem::path emit_dataset(const CorpusSpec& spec, const ToyGrammarPair& grammar,
                                   const std::filesystem::path& out_dir);

Dataset load_dataset(const std::filesystem::path& manifest_path);
// The generation parameters recorded in a manifest.
CorpusSpec manifest_spec(const std::filesystem::path& manifest_path);
// Every file the manifest references, manifest first.
std::vector<std::filesystem::path> manifest_files(const std::filesystem::path& manifest_path);

}  // namespace pivotcap
