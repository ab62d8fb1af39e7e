#include "pivotcap/model.hpp"

#include "pivotcap/ops.hpp"

namespace pivotcap {

void validate(const ModelConfig& cfg) {
  if (cfg.dim == 0) throw ConfigError("model.dim must be positive");
  validate(GcnConfig{cfg.dim, cfg.gcn_layers, cfg.direction_weights});
  validate(DecoderConfig{cfg.dim, cfg.heads, cfg.decoder_layers, cfg.ff_dim, cfg.max_len});
}

Vocabularies Vocabularies::from_dataset(const Dataset& data) {
  std::set<std::string> pivot, target, labels, phrases;
  auto add_tree = [&](const ConstituencyTree& t) {
    for (const auto& n : t.nodes)
      if (n.kind == ScNodeKind::kPhrasal) phrases.insert(n.label);
  };
  auto add_sg = [&](const SceneGraph& g) {
    for (const auto& n : g.nodes) labels.insert(fold_case(n.label));
  };
  for (const auto* split : {&data.caption, &data.parallel}) {
    for (const auto& ex : *split) {
      pivot.insert(ex.pivot.tokens.begin(), ex.pivot.tokens.end());
      target.insert(ex.target.tokens.begin(), ex.target.tokens.end());
      add_sg(ex.language_sg);
      add_tree(ex.pivot_tree);
      add_tree(ex.target_tree);
    }
  }
  const Vocabulary reserved;
  for (const auto& t : reserved.tokens()) {
    pivot.erase(t);
    target.erase(t);
    labels.erase(t);
    phrases.erase(t);
  }
  return {Vocabulary::from_corpus(pivot), Vocabulary::from_corpus(target), Vocabulary::from_corpus(labels),
          Vocabulary::from_corpus(phrases)};
}

ConstituencyTree flat_tree(const std::vector<std::string>& words) {
  TreeBuilder b;
  const std::size_t root = b.phrase(words.empty() ? "FRAG" : "S");
  if (words.empty()) b.word("<unk>", root);
  for (const auto& w : words) b.word(w, root);
  return std::move(b).build();
}

PivotCaptioner::PivotCaptioner(const ModelConfig& cfg, Vocabularies vocab, std::size_t feature_width,
                               std::uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)), feature_width_(feature_width) {
  validate(cfg_);
  Rng rng(mix_seed(seed, 0x30de1));
  const GcnConfig gcn{cfg_.dim, cfg_.gcn_layers, cfg_.direction_weights};
  const DecoderConfig dec{cfg_.dim, cfg_.heads, cfg_.decoder_layers, cfg_.ff_dim, cfg_.max_len};
  sg_encoder_ = SceneGraphEncoder(store_, "sg_encoder", gcn, vocab_.sg_labels, feature_width_, rng);
  sc_encoder_ = TreeEncoder(store_, "sc_encoder", gcn, vocab_.phrases, rng);
  pivot_decoder_ = TransformerDecoder(store_, "pivot_decoder", dec, vocab_.pivot.size(), rng);
  target_decoder_ = TransformerDecoder(store_, "target_decoder", dec, vocab_.target.size(), rng);
}

Tensor PivotCaptioner::encode_sg(const SceneGraph& g) const {
  return cfg_.use_sg ? sg_encoder_.encode(g) : sg_encoder_.encode_pooled(g);
}

Tensor PivotCaptioner::encode_sc(const ConstituencyTree& t, Language lang) const {
  const auto& dec = lang == Language::kPivot ? pivot_decoder_ : target_decoder_;
  const auto& words = lang == Language::kPivot ? vocab_.pivot : vocab_.target;
  if (!cfg_.use_sc) return sc_encoder_.encode(flat_tree(t.leaves()), dec.token_embedding(), words);
  return sc_encoder_.encode(t, dec.token_embedding(), words);
}

Tensor PivotCaptioner::fuse(const Tensor& sc_rows, const Tensor& sg_rows) const {
  if (!cfg_.use_residual) return sc_rows;
  return fuse_structures(sc_rows, sg_rows, static_cast<double>(cfg_.dim), cfg_.fusion);
}

Tensor PivotCaptioner::caption_nll(const SceneGraph& g, const Caption& pivot) const {
  return pivot_decoder_.nll(encode_sg(g), vocab_.pivot.encode(pivot));
}

Tensor PivotCaptioner::translation_nll_from(const Tensor& sg_rows, const ConstituencyTree& pivot_tree,
                                            const Caption& target) const {
  Tensor memory = fuse(encode_sc(pivot_tree, Language::kPivot), sg_rows);
  return target_decoder_.nll(memory, vocab_.target.encode(target));
}

Tensor PivotCaptioner::translation_nll(const SceneGraph& g, const ConstituencyTree& pivot_tree,
                                       const Caption& target) const {
  return translation_nll_from(encode_sg(g), pivot_tree, target);
}

Caption PivotCaptioner::generate_pivot(const SceneGraph& g) const {
  NoGradGuard no_grad;
  return vocab_.pivot.decode(pivot_decoder_.greedy(encode_sg(g), Language::kPivot));
}

Caption PivotCaptioner::generate_target(const SceneGraph& g, const ConstituencyTree& pivot_tree) const {
  NoGradGuard no_grad;
  Tensor memory = fuse(encode_sc(pivot_tree, Language::kPivot), encode_sg(g));
  return vocab_.target.decode(target_decoder_.greedy(memory, Language::kTarget));
}

Prediction PivotCaptioner::predict(const SceneGraph& visual, const CaptionParser& parser) const {
  NoGradGuard no_grad;
  Tensor h = encode_sg(visual);
  Prediction p;
  p.pivot = vocab_.pivot.decode(pivot_decoder_.greedy(h, Language::kPivot));
  p.pivot_tree = parser.parse_tree(p.pivot);
  Tensor memory = fuse(encode_sc(p.pivot_tree, Language::kPivot), h);
  p.target = vocab_.target.decode(target_decoder_.greedy(memory, Language::kTarget));
  return p;
}

}  // namespace pivotcap
