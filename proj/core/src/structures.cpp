#include "pivotcap/structures.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pivotcap {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Trees

std::size_t ConstituencyTree::root() const {
  for (std::size_t i = 0; i < parent.size(); ++i)
    if (!parent[i]) return i;
  throw ValidationError(ValidationCode::kNoRoot, "tree has no root");
}

std::vector<std::size_t> ConstituencyTree::leaf_ids() const {
  std::vector<std::size_t> out;
  if (nodes.empty()) return out;
  std::vector<std::size_t> stack{root()};
  while (!stack.empty()) {
    const std::size_t id = stack.back();
    stack.pop_back();
    if (nodes[id].kind == ScNodeKind::kWord) out.push_back(id);
    const auto& kids = children[id];
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::vector<std::string> ConstituencyTree::leaves() const {
  std::vector<std::string> out;
  for (auto id : leaf_ids()) out.push_back(nodes[id].label);
  return out;
}

std::size_t TreeBuilder::add(std::string label, ScNodeKind kind, std::optional<std::size_t> parent) {
  const std::size_t id = tree_.nodes.size();
  tree_.nodes.push_back({id, std::move(label), kind});
  tree_.parent.push_back(parent);
  tree_.children.emplace_back();
  if (parent) tree_.children.at(*parent).push_back(id);
  return id;
}

std::size_t TreeBuilder::phrase(std::string label, std::optional<std::size_t> parent) {
  return add(std::move(label), ScNodeKind::kPhrasal, parent);
}

std::size_t TreeBuilder::word(std::string label, std::size_t parent) {
  return add(std::move(label), ScNodeKind::kWord, parent);
}

ConstituencyTree TreeBuilder::build() && { return std::move(tree_); }

// ---------------------------------------------------------------------------
// Captions and vocabularies

std::string to_string(Language lang) { return lang == Language::kPivot ? "pivot" : "target"; }

Language language_from_string(const std::string& name) {
  if (name == "pivot") return Language::kPivot;
  if (name == "target") return Language::kTarget;
  throw SchemaError("unknown language \"" + name + "\"");
}

namespace {
const std::vector<std::string> kReservedTokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  for (const auto& t : kReservedTokens) {
    stoi_.emplace(t, itos_.size());
    itos_.push_back(t);
  }
  for (const auto& t : tokens) {
    if (!stoi_.emplace(t, itos_.size()).second) throw Error("vocabulary: duplicate token \"" + t + "\"");
    itos_.push_back(t);
  }
}

Vocabulary Vocabulary::from_corpus(const std::set<std::string>& tokens) {
  std::vector<std::string> list;
  for (const auto& t : tokens)
    if (std::find(kReservedTokens.begin(), kReservedTokens.end(), t) == kReservedTokens.end()) list.push_back(t);
  return Vocabulary(list);
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = stoi_.find(token);
  return it == stoi_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= itos_.size()) throw IndexError("vocabulary: id " + std::to_string(id) + " out of range");
  return itos_[id];
}

CaptionSequence Vocabulary::encode(const Caption& caption) const {
  CaptionSequence seq{caption.lang, {kBos}};
  for (const auto& t : caption.tokens) seq.ids.push_back(id(t));
  seq.ids.push_back(kEos);
  return seq;
}

Caption Vocabulary::decode(const CaptionSequence& seq) const {
  Caption c{seq.lang, {}};
  for (auto id : seq.ids) {
    if (id == kEos) break;
    if (id == kBos || id == kPad) continue;
    c.tokens.push_back(token(id));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Validation

std::string to_string(ValidationCode code) {
  switch (code) {
    case ValidationCode::kDanglingEdge: return "dangling-edge";
    case ValidationCode::kSelfLoop: return "self-loop";
    case ValidationCode::kNonDenseIds: return "non-dense-ids";
    case ValidationCode::kOrphanAttribute: return "orphan-attribute";
    case ValidationCode::kRelationArity: return "relation-arity";
    case ValidationCode::kFeatureShape: return "feature-shape";
    case ValidationCode::kEmptyTree: return "empty-tree";
    case ValidationCode::kMultiRoot: return "multi-root";
    case ValidationCode::kNoRoot: return "no-root";
    case ValidationCode::kCycle: return "cycle";
    case ValidationCode::kParentChildMismatch: return "parent-child-mismatch";
    case ValidationCode::kWordNotLeaf: return "word-not-leaf";
    case ValidationCode::kPhrasalLeaf: return "phrasal-leaf";
    case ValidationCode::kLeafOrder: return "leaf-order";
    case ValidationCode::kTokenOutOfRange: return "token-out-of-range";
    case ValidationCode::kMissingBoundary: return "missing-boundary";
  }
  return "unknown";
}

ValidationError::ValidationError(ValidationCode code, const std::string& message)
    : Error(to_string(code) + ": " + message), code_(code) {}

namespace {
std::string id_str(std::size_t id) { return std::to_string(id); }
}  // namespace

void validate_scene_graph(const SceneGraph& g) {
  const std::size_t n = g.nodes.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (g.nodes[i].id != i) {
      throw ValidationError(ValidationCode::kNonDenseIds,
                            "node at position " + id_str(i) + " has id " + id_str(g.nodes[i].id));
    }
  }
  std::vector<std::size_t> in_deg(n, 0), out_deg(n, 0);
  std::vector<bool> touches_object(n, false);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [src, dst] = g.edges[e];
    if (src >= n || dst >= n) {
      throw ValidationError(ValidationCode::kDanglingEdge, "edge " + id_str(e) + " (" + id_str(src) + "->" +
                                                               id_str(dst) + ") references a missing node in a " +
                                                               id_str(n) + "-node graph");
    }
    if (src == dst) throw ValidationError(ValidationCode::kSelfLoop, "edge " + id_str(e) + " loops on node " + id_str(src));
    ++out_deg[src];
    ++in_deg[dst];
    if (g.nodes[dst].kind == SgNodeKind::kObject) touches_object[src] = true;
    if (g.nodes[src].kind == SgNodeKind::kObject) touches_object[dst] = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = g.nodes[i];
    if (node.kind == SgNodeKind::kAttribute && !touches_object[i]) {
      throw ValidationError(ValidationCode::kOrphanAttribute,
                            "attribute node " + id_str(i) + " (\"" + node.label + "\") has no edge to an object");
    }
    if (node.kind == SgNodeKind::kRelation && (in_deg[i] == 0 || out_deg[i] == 0)) {
      throw ValidationError(ValidationCode::kRelationArity, "relation node " + id_str(i) + " (\"" + node.label +
                                                                "\") has in-degree " + id_str(in_deg[i]) +
                                                                " and out-degree " + id_str(out_deg[i]));
    }
  }
  if (g.has_features()) {
    if (g.features.size() != n) {
      throw ValidationError(ValidationCode::kFeatureShape,
                            id_str(g.features.size()) + " feature rows for " + id_str(n) + " nodes");
    }
    const std::size_t w = g.features.front().size();
    for (std::size_t i = 0; i < n; ++i) {
      if (g.features[i].size() != w || w == 0) {
        throw ValidationError(ValidationCode::kFeatureShape,
                              "feature row " + id_str(i) + " has width " + id_str(g.features[i].size()));
      }
    }
  }
}

void validate_constituency_tree(const ConstituencyTree& t, const std::vector<std::string>* tokens) {
  const std::size_t n = t.nodes.size();
  if (n == 0) throw ValidationError(ValidationCode::kEmptyTree, "tree has no nodes");
  if (t.parent.size() != n || t.children.size() != n) {
    throw ValidationError(ValidationCode::kParentChildMismatch,
                          "parent/children tables sized " + id_str(t.parent.size()) + "/" +
                              id_str(t.children.size()) + " for " + id_str(n) + " nodes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.nodes[i].id != i) {
      throw ValidationError(ValidationCode::kNonDenseIds,
                            "node at position " + id_str(i) + " has id " + id_str(t.nodes[i].id));
    }
  }
  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) {
    if (!t.parent[i]) roots.push_back(i);
  }
  if (roots.empty()) throw ValidationError(ValidationCode::kNoRoot, "every node has a parent");
  if (roots.size() > 1) {
    throw ValidationError(ValidationCode::kMultiRoot,
                          "nodes " + id_str(roots[0]) + " and " + id_str(roots[1]) + " both lack a parent");
  }
  std::vector<std::size_t> listed(n, 0);
  for (std::size_t p = 0; p < n; ++p) {
    for (auto c : t.children[p]) {
      if (c >= n) {
        throw ValidationError(ValidationCode::kParentChildMismatch,
                              "node " + id_str(p) + " lists missing child " + id_str(c));
      }
      if (t.parent[c] != p) {
        throw ValidationError(ValidationCode::kParentChildMismatch,
                              "node " + id_str(p) + " lists child " + id_str(c) + " whose parent differs");
      }
      ++listed[c];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.parent[i] && listed[i] != 1) {
      throw ValidationError(ValidationCode::kParentChildMismatch,
                            "node " + id_str(i) + " appears " + id_str(listed[i]) + " times in its parent's children");
    }
  }
  // With one root and consistent parent links, anything unreachable from
  // the root sits on a parent cycle.
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{roots[0]};
  seen[roots[0]] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    for (auto c : t.children[id]) {
      if (seen[c]) throw ValidationError(ValidationCode::kCycle, "node " + id_str(c) + " reached twice");
      seen[c] = true;
      ++reached;
      stack.push_back(c);
    }
  }
  if (reached != n) {
    for (std::size_t i = 0; i < n; ++i)
      if (!seen[i]) throw ValidationError(ValidationCode::kCycle, "node " + id_str(i) + " lies on a parent cycle");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.nodes[i].kind == ScNodeKind::kWord && !t.children[i].empty()) {
      throw ValidationError(ValidationCode::kWordNotLeaf, "word node " + id_str(i) + " (\"" + t.nodes[i].label +
                                                              "\") has " + id_str(t.children[i].size()) + " children");
    }
    if (t.nodes[i].kind == ScNodeKind::kPhrasal && t.children[i].empty()) {
      throw ValidationError(ValidationCode::kPhrasalLeaf,
                            "phrasal node " + id_str(i) + " (\"" + t.nodes[i].label + "\") has no children");
    }
  }
  if (tokens) {
    const auto leaves = t.leaves();
    if (leaves != *tokens) {
      std::size_t k = 0;
      while (k < leaves.size() && k < tokens->size() && leaves[k] == (*tokens)[k]) ++k;
      throw ValidationError(ValidationCode::kLeafOrder, "leaf sequence diverges from tokens at position " + id_str(k));
    }
  }
}

void validate_caption_sequence(const CaptionSequence& seq, std::size_t vocab_size) {
  for (std::size_t i = 0; i < seq.ids.size(); ++i) {
    if (seq.ids[i] >= vocab_size) {
      throw ValidationError(ValidationCode::kTokenOutOfRange, "token " + id_str(i) + " has id " +
                                                                  id_str(seq.ids[i]) + " >= vocabulary size " +
                                                                  id_str(vocab_size));
    }
  }
  if (seq.ids.size() < 2 || seq.ids.front() != Vocabulary::kBos || seq.ids.back() != Vocabulary::kEos) {
    throw ValidationError(ValidationCode::kMissingBoundary, "sequence must start with BOS and end with EOS");
  }
}

// ---------------------------------------------------------------------------
// Traversals

std::string fold_case(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::set<LabelPair> sg_edge_triples(const SceneGraph& g) {
  std::set<LabelPair> out;
  for (const auto& e : g.edges) out.emplace(fold_case(g.nodes.at(e.src).label), fold_case(g.nodes.at(e.dst).label));
  return out;
}

std::vector<std::pair<std::string, std::size_t>> sc_nodes_by_depth(const ConstituencyTree& t) {
  std::vector<std::pair<std::string, std::size_t>> out;
  if (t.nodes.empty()) return out;
  std::deque<std::pair<std::size_t, std::size_t>> queue{{t.root(), 1}};
  while (!queue.empty()) {
    auto [id, depth] = queue.front();
    queue.pop_front();
    if (t.nodes[id].kind != ScNodeKind::kPhrasal) continue;
    out.emplace_back(t.nodes[id].label, depth);
    for (auto c : t.children[id]) queue.emplace_back(c, depth + 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

const char* kind_name(SgNodeKind k) {
  switch (k) {
    case SgNodeKind::kObject: return "object";
    case SgNodeKind::kAttribute: return "attribute";
    case SgNodeKind::kRelation: return "relation";
  }
  return "object";
}

const char* kind_name(ScNodeKind k) { return k == ScNodeKind::kPhrasal ? "phrasal" : "word"; }

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw SchemaError(path.empty() ? "record is not an object" : path + " is not an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError("missing field \"" + (path.empty() ? key : path + "." + key) + "\"");
  return *it;
}

std::string path_of(const std::string& parent, const std::string& key) { return parent.empty() ? key : parent + "." + key; }

const json& array_field(const json& obj, const std::string& key, const std::string& path = "") {
  const json& v = field(obj, key, path);
  if (!v.is_array()) throw SchemaError("field \"" + path_of(path, key) + "\" must be an array");
  return v;
}

std::size_t as_index(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw SchemaError("field \"" + path + "\" must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw SchemaError("field \"" + path + "\" must be a string");
  return v.get<std::string>();
}

SgNodeKind sg_kind(const std::string& s, const std::string& path) {
  if (s == "object") return SgNodeKind::kObject;
  if (s == "attribute") return SgNodeKind::kAttribute;
  if (s == "relation") return SgNodeKind::kRelation;
  throw SchemaError("field \"" + path + "\" has unknown kind \"" + s + "\"");
}

ScNodeKind sc_kind(const std::string& s, const std::string& path) {
  if (s == "phrasal") return ScNodeKind::kPhrasal;
  if (s == "word") return ScNodeKind::kWord;
  throw SchemaError("field \"" + path + "\" has unknown kind \"" + s + "\"");
}

json parse_line(const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("malformed JSON: ") + e.what());
  }
}

SceneGraph sg_from(const json& j) {
  SceneGraph g;
  const json& nodes = array_field(j, "nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string p = "nodes[" + std::to_string(i) + "]";
    g.nodes.push_back({as_index(field(nodes[i], "id", p), p + ".id"), as_string(field(nodes[i], "label", p), p + ".label"),
                       sg_kind(as_string(field(nodes[i], "kind", p), p + ".kind"), p + ".kind")});
  }
  const json& edges = array_field(j, "edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string p = "edges[" + std::to_string(i) + "]";
    if (!edges[i].is_array() || edges[i].size() != 2) throw SchemaError("field \"" + p + "\" must be a [src, dst] pair");
    g.edges.push_back({as_index(edges[i][0], p + "[0]"), as_index(edges[i][1], p + "[1]")});
  }
  if (auto it = j.find("features"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw SchemaError("field \"features\" must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& row = (*it)[i];
      const std::string p = "features[" + std::to_string(i) + "]";
      if (!row.is_array()) throw SchemaError("field \"" + p + "\" must be an array");
      std::vector<double> values;
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (!row[k].is_number()) throw SchemaError("field \"" + p + "[" + std::to_string(k) + "]\" must be a number");
        values.push_back(row[k].get<double>());
      }
      g.features.push_back(std::move(values));
    }
  }
  return g;
}

ConstituencyTree tree_from(const json& j) {
  ConstituencyTree t;
  const json& nodes = array_field(j, "nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string p = "nodes[" + std::to_string(i) + "]";
    t.nodes.push_back({as_index(field(nodes[i], "id", p), p + ".id"), as_string(field(nodes[i], "label", p), p + ".label"),
                       sc_kind(as_string(field(nodes[i], "kind", p), p + ".kind"), p + ".kind")});
  }
  const json& parents = array_field(j, "parent");
  for (std::size_t i = 0; i < parents.size(); ++i) {
    if (parents[i].is_null()) {
      t.parent.emplace_back(std::nullopt);
    } else {
      t.parent.emplace_back(as_index(parents[i], "parent[" + std::to_string(i) + "]"));
    }
  }
  const json& children = array_field(j, "children");
  for (std::size_t i = 0; i < children.size(); ++i) {
    const std::string p = "children[" + std::to_string(i) + "]";
    if (!children[i].is_array()) throw SchemaError("field \"" + p + "\" must be an array");
    std::vector<std::size_t> kids;
    for (std::size_t k = 0; k < children[i].size(); ++k) kids.push_back(as_index(children[i][k], p + "[" + std::to_string(k) + "]"));
    t.children.push_back(std::move(kids));
  }
  return t;
}

Caption caption_from(const json& j) {
  Caption c;
  c.lang = language_from_string(as_string(field(j, "lang", ""), "lang"));
  const json& tokens = array_field(j, "tokens");
  for (std::size_t i = 0; i < tokens.size(); ++i) c.tokens.push_back(as_string(tokens[i], "tokens[" + std::to_string(i) + "]"));
  return c;
}

json to_json(const SceneGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes) nodes.push_back({{"id", n.id}, {"label", n.label}, {"kind", kind_name(n.kind)}});
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({e.src, e.dst});
  json j = {{"nodes", nodes}, {"edges", edges}};
  if (g.has_features()) j["features"] = g.features;
  return j;
}

json to_json(const ConstituencyTree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes) nodes.push_back({{"id", n.id}, {"label", n.label}, {"kind", kind_name(n.kind)}});
  json parents = json::array();
  for (const auto& p : t.parent) parents.push_back(p ? json(*p) : json(nullptr));
  json children = json::array();
  for (const auto& c : t.children) children.push_back(c);
  return {{"nodes", nodes}, {"parent", parents}, {"children", children}};
}

json to_json(const Caption& c) { return {{"lang", to_string(c.lang)}, {"tokens", c.tokens}}; }

}  // namespace

std::string to_json_line(const SceneGraph& g) { return to_json(g).dump(); }
std::string to_json_line(const ConstituencyTree& t) { return to_json(t).dump(); }
std::string to_json_line(const Caption& c) { return to_json(c).dump(); }

SceneGraph scene_graph_from_json(const std::string& line) { return sg_from(parse_line(line)); }
ConstituencyTree tree_from_json(const std::string& line) { return tree_from(parse_line(line)); }
Caption caption_from_json(const std::string& line) { return caption_from(parse_line(line)); }

std::vector<Record> read_jsonl(const std::filesystem::path& path, RecordKind kind) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Record> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      switch (kind) {
        case RecordKind::kSceneGraph: out.emplace_back(scene_graph_from_json(line)); break;
        case RecordKind::kConstituencyTree: out.emplace_back(tree_from_json(line)); break;
        case RecordKind::kCaption: out.emplace_back(caption_from_json(line)); break;
      }
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& r : records) {
    std::visit([&](const auto& rec) { out << to_json_line(rec) << '\n'; }, r);
  }
  if (!out) throw Error("write failed for " + path.string());
}

template <typename T>
std::vector<T> read_jsonl_as(const std::filesystem::path& path) {
  RecordKind kind;
  if constexpr (std::is_same_v<T, SceneGraph>) {
    kind = RecordKind::kSceneGraph;
  } else if constexpr (std::is_same_v<T, ConstituencyTree>) {
    kind = RecordKind::kConstituencyTree;
  } else {
    kind = RecordKind::kCaption;
  }
  std::vector<T> out;
  for (auto& r : read_jsonl(path, kind)) out.push_back(std::get<T>(std::move(r)));
  return out;
}

template std::vector<SceneGraph> read_jsonl_as<SceneGraph>(const std::filesystem::path&);
template std::vector<ConstituencyTree> read_jsonl_as<ConstituencyTree>(const std::filesystem::path&);
template std::vector<Caption> read_jsonl_as<Caption>(const std::filesystem::path&);

}  // namespace pivotcap
