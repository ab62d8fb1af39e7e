#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "pivotcap/error.hpp"

namespace pivotcap {

// ---------------------------------------------------------------------------
// Scene graphs

enum class SgNodeKind { kObject, kAttribute, kRelation };

struct SgNode {
  std::size_t id = 0;
  std::string label;
  SgNodeKind kind = SgNodeKind::kObject;

  friend bool operator==(const SgNode&, const SgNode&) = default;
};

struct SgEdge {
  std::size_t src = 0;
  std::size_t dst = 0;

  friend bool operator==(const SgEdge&, const SgEdge&) = default;
};

// Directed graph of object/attribute/relation nodes. Visual scene graphs
// additionally carry one fixed-width feature row per node.
struct SceneGraph {
  std::vector<SgNode> nodes;
  std::vector<SgEdge> edges;
  std::vector<std::vector<double>> features;

  bool has_features() const { return !features.empty(); }
  std::size_t feature_width() const { return features.empty() ? 0 : features.front().size(); }

  friend bool operator==(const SceneGraph&, const SceneGraph&) = default;
};

// ---------------------------------------------------------------------------
// Constituency trees

enum class ScNodeKind { kPhrasal, kWord };

struct ScNode {
  std::size_t id = 0;
  std::string label;
  ScNodeKind kind = ScNodeKind::kPhrasal;

  friend bool operator==(const ScNode&, const ScNode&) = default;
};

struct ConstituencyTree {
  std::vector<ScNode> nodes;
  std::vector<std::optional<std::size_t>> parent;
  std::vector<std::vector<std::size_t>> children;

  std::size_t root() const;
  // Word labels in left-to-right order.
  std::vector<std::string> leaves() const;
  // Word node ids in left-to-right order.
  std::vector<std::size_t> leaf_ids() const;

  friend bool operator==(const ConstituencyTree&, const ConstituencyTree&) = default;
};

// Builds trees top-down with explicit child order.
class TreeBuilder {
 public:
  std::size_t phrase(std::string label, std::optional<std::size_t> parent = std::nullopt);
  std::size_t word(std::string label, std::size_t parent);
  ConstituencyTree build() &&;

 private:
  std::size_t add(std::string label, ScNodeKind kind, std::optional<std::size_t> parent);
  ConstituencyTree tree_;
};

// ---------------------------------------------------------------------------
// Captions and vocabularies

enum class Language { kPivot, kTarget };

std::string to_string(Language lang);
Language language_from_string(const std::string& name);

struct Caption {
  Language lang = Language::kPivot;
  std::vector<std::string> tokens;

  friend bool operator==(const Caption&, const Caption&) = default;
};

struct CaptionSequence {
  Language lang = Language::kPivot;
  std::vector<std::size_t> ids;
};

class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocabulary();
  // Reserved entries followed by `tokens` in the given order. Duplicates
  // and reserved spellings are rejected.
  explicit Vocabulary(const std::vector<std::string>& tokens);
  // Sorted, deduplicated.
  static Vocabulary from_corpus(const std::set<std::string>& tokens);

  std::size_t size() const { return itos_.size(); }
  std::size_t id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const { return stoi_.count(token) > 0; }
  const std::string& token(std::size_t id) const;
  const std::vector<std::string>& tokens() const { return itos_; }

  // BOS + ids + EOS.
  CaptionSequence encode(const Caption& caption) const;
  // Strips BOS/PAD, stops at EOS.
  Caption decode(const CaptionSequence& seq) const;

 private:
  std::vector<std::string> itos_;
  std::unordered_map<std::string, std::size_t> stoi_;
};

// ---------------------------------------------------------------------------
// Validation

enum class ValidationCode {
  kDanglingEdge,
  kSelfLoop,
  kNonDenseIds,
  kOrphanAttribute,
  kRelationArity,
  kFeatureShape,
  kEmptyTree,
  kMultiRoot,
  kNoRoot,
  kCycle,
  kParentChildMismatch,
  kWordNotLeaf,
  kPhrasalLeaf,
  kLeafOrder,
  kTokenOutOfRange,
  kMissingBoundary,
};

std::string to_string(ValidationCode code);

class ValidationError : public Error {
 public:
  ValidationError(ValidationCode code, const std::string& message);
  ValidationCode code() const { return code_; }

 private:
  ValidationCode code_;
};

void validate_scene_graph(const SceneGraph& g);
// When `tokens` is given, the leaf sequence must reproduce it.
void validate_constituency_tree(const ConstituencyTree& t,
                                const std::vector<std::string>* tokens = nullptr);
void validate_caption_sequence(const CaptionSequence& seq, std::size_t vocab_size);

// ---------------------------------------------------------------------------
// Traversals used by the coincidence probes

using LabelPair = std::pair<std::string, std::string>;

// Distinct directed (src label, dst label) pairs, case-folded.
std::set<LabelPair> sg_edge_triples(const SceneGraph& g);

// Phrasal nodes in breadth-first order with depth (root = 1).
std::vector<std::pair<std::string, std::size_t>> sc_nodes_by_depth(const ConstituencyTree& t);

std::string fold_case(std::string s);

// ---------------------------------------------------------------------------
// Parsing of generated captions

// Produces structures for captions the model generates itself (the
// training data ships its structures pre-parsed).
class CaptionParser {
 public:
  virtual ~CaptionParser() = default;
  virtual ConstituencyTree parse_tree(const Caption& caption) const = 0;
  // Scene graph of the caption, labelled in the pivot language.
  virtual SceneGraph derive_scene_graph(const Caption& caption) const = 0;
};

// ---------------------------------------------------------------------------
// JSON Lines serialization

using Record = std::variant<SceneGraph, ConstituencyTree, Caption>;

enum class RecordKind { kSceneGraph, kConstituencyTree, kCaption };

std::string to_json_line(const SceneGraph& g);
std::string to_json_line(const ConstituencyTree& t);
std::string to_json_line(const Caption& c);

SceneGraph scene_graph_from_json(const std::string& line);
ConstituencyTree tree_from_json(const std::string& line);
Caption caption_from_json(const std::string& line);

// Schema errors name the offending field path and line number.
std::vector<Record> read_jsonl(const std::filesystem::path& path, RecordKind kind);
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records);

template <typename T>
std::vector<T> read_jsonl_as(const std::filesystem::path& path);

}  // namespace pivotcap
