#include "pivotcap/decoder.hpp"

#include <cmath>

#include "pivotcap/ops.hpp"

namespace pivotcap {

void validate(const DecoderConfig& cfg) {
  if (cfg.model_dim == 0 || cfg.heads == 0 || cfg.layers == 0 || cfg.ff_dim == 0 || cfg.max_len == 0) {
    throw ConfigError("decoder dimensions must be positive");
  }
  if (cfg.model_dim % cfg.heads != 0) {
    throw ConfigError("decoder model_dim " + std::to_string(cfg.model_dim) + " is not divisible by heads " +
                      std::to_string(cfg.heads));
  }
}

MultiHeadAttention MultiHeadAttention::create(ParameterStore& store, const std::string& name, std::size_t dim,
                                              std::size_t heads, Rng& rng) {
  MultiHeadAttention a;
  a.query = Linear::create(store, name + ".query", dim, dim, rng);
  a.key = Linear::create(store, name + ".key", dim, dim, rng, false, false);
  a.value = Linear::create(store, name + ".value", dim, dim, rng);
  a.output = Linear::create(store, name + ".output", dim, dim, rng);
  a.heads = heads;
  return a;
}

Tensor MultiHeadAttention::operator()(const Tensor& queries, const Tensor& keys_values, bool causal) const {
  return output(attend(query(queries), key(keys_values), value(keys_values), causal));
}

Tensor MultiHeadAttention::attend(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) const {
  const std::size_t dim = q.dim(1);
  const std::size_t head_dim = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = heads == 1 ? q : slice(q, 1, h * head_dim, head_dim);
    Tensor kh = heads == 1 ? k : slice(k, 1, h * head_dim, head_dim);
    Tensor vh = heads == 1 ? v : slice(v, 1, h * head_dim, head_dim);
    Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt);
    Tensor weights = causal ? causal_softmax(scores) : softmax(scores, 1);
    outs.push_back(matmul(weights, vh));
  }
  return heads == 1 ? outs.front() : concat(outs, 1);
}

TransformerDecoder::TransformerDecoder(ParameterStore& store, const std::string& prefix, const DecoderConfig& cfg,
                                       std::size_t vocab_size, Rng& rng)
    : cfg_(cfg), vocab_size_(vocab_size) {
  validate(cfg);
  const std::size_t d = cfg.model_dim;
  token_embedding_ = store.add(prefix + ".token_embedding", normal_init({vocab_size, d}, 0.5, rng));
  memory_norm_ = LayerNorm::create(store, prefix + ".memory_norm", d);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = prefix + "/layer" + std::to_string(l);
    DecoderLayer layer;
    layer.self_norm = LayerNorm::create(store, p + ".self_norm", d);
    layer.self_attention = MultiHeadAttention::create(store, p + ".self_attention", d, cfg.heads, rng);
    layer.cross_norm = LayerNorm::create(store, p + ".cross_norm", d);
    layer.cross_attention = MultiHeadAttention::create(store, p + ".cross_attention", d, cfg.heads, rng);
    layer.ff_norm = LayerNorm::create(store, p + ".ff_norm", d);
    layer.ff_in = Linear::create(store, p + ".ff_in", d, cfg.ff_dim, rng);
    layer.ff_out = Linear::create(store, p + ".ff_out", cfg.ff_dim, d, rng);
    layers_.push_back(std::move(layer));
  }
  final_norm_ = LayerNorm::create(store, prefix + ".final_norm", d);
  head_ = Linear::create(store, prefix + ".head", d, vocab_size, rng, /*zero_init=*/true);
}

void TransformerDecoder::check_memory(const Tensor& memory) const {
  if (!memory.defined() || memory.rank() != 2 || memory.dim(0) == 0) {
    throw ShapeError("decoder: structure memory is empty");
  }
  if (memory.dim(1) != cfg_.model_dim) {
    throw ShapeError("decoder: memory " + shape_str(memory.shape()) + " does not have width " +
                     std::to_string(cfg_.model_dim));
  }
}

Tensor TransformerDecoder::hidden(const Tensor& memory, std::span<const std::size_t> input_ids) const {
  check_memory(memory);
  if (input_ids.empty()) throw ShapeError("decoder: empty input sequence");
  Tensor mem = memory_norm_(memory);
  Tensor x = add(embedding(token_embedding_, input_ids), sinusoidal_positions(input_ids.size(), cfg_.model_dim));
  for (const auto& layer : layers_) {
    Tensor s = layer.self_norm(x);
    x = add(x, layer.self_attention(s, s, /*causal=*/true));
    x = add(x, layer.cross_attention(layer.cross_norm(x), mem, /*causal=*/false));
    x = add(x, layer.ff_out(relu(layer.ff_in(layer.ff_norm(x)))));
  }
  return final_norm_(x);
}

Tensor TransformerDecoder::logits(const Tensor& memory, std::span<const std::size_t> input_ids) const {
  return head_(hidden(memory, input_ids));
}

Tensor TransformerDecoder::teacher_forced_logits(const Tensor& memory, const CaptionSequence& seq) const {
  if (seq.ids.size() < 2) throw ShapeError("decoder: teacher forcing needs BOS and at least one target token");
  return logits(memory, std::span<const std::size_t>(seq.ids.data(), seq.ids.size() - 1));
}

Tensor TransformerDecoder::nll(const Tensor& memory, const CaptionSequence& seq) const {
  Tensor lg = teacher_forced_logits(memory, seq);
  return cross_entropy(lg, std::span<const std::size_t>(seq.ids.data() + 1, seq.ids.size() - 1), Vocabulary::kPad);
}

CaptionSequence TransformerDecoder::greedy(const Tensor& memory, Language lang) const {
  NoGradGuard no_grad;
  check_memory(memory);
  // Incremental decoding: self-attention keys/values of earlier positions
  // and cross-attention keys/values of the memory are computed once.
  Tensor mem = memory_norm_(memory.detach());
  struct Cache {
    Tensor self_k, self_v, cross_k, cross_v;
  };
  std::vector<Cache> cache;
  for (const auto& layer : layers_) {
    cache.push_back({Tensor(), Tensor(), layer.cross_attention.key(mem), layer.cross_attention.value(mem)});
  }
  CaptionSequence out{lang, {Vocabulary::kBos}};
  while (out.ids.size() <= cfg_.max_len) {
    const std::size_t pos = out.ids.size() - 1;
    const std::size_t id = out.ids.back();
    Tensor x = add(embedding(token_embedding_, std::span<const std::size_t>(&id, 1)),
                   sinusoidal_positions(std::vector<std::size_t>{pos}, cfg_.model_dim));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      auto& c = cache[l];
      Tensor s = layer.self_norm(x);
      Tensor k = layer.self_attention.key(s);
      Tensor v = layer.self_attention.value(s);
      c.self_k = c.self_k.defined() ? concat(std::vector<Tensor>{c.self_k, k}, 0) : k;
      c.self_v = c.self_v.defined() ? concat(std::vector<Tensor>{c.self_v, v}, 0) : v;
      x = add(x, layer.self_attention.output(
                     layer.self_attention.attend(layer.self_attention.query(s), c.self_k, c.self_v, false)));
      Tensor cq = layer.cross_attention.query(layer.cross_norm(x));
      x = add(x, layer.cross_attention.output(layer.cross_attention.attend(cq, c.cross_k, c.cross_v, false)));
      x = add(x, layer.ff_out(relu(layer.ff_in(layer.ff_norm(x)))));
    }
    Tensor lg = head_(final_norm_(x));
    const auto row = lg.data();
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
      if (row[j] > row[best]) best = j;
    out.ids.push_back(best);
    if (best == Vocabulary::kEos) break;
  }
  return out;
}

std::string to_string(FusionMode mode) { return mode == FusionMode::kAttention ? "attention" : "literal"; }

FusionMode fusion_mode_from_string(const std::string& name) {
  if (name == "attention") return FusionMode::kAttention;
  if (name == "literal") return FusionMode::kLiteral;
  throw ConfigError("unknown fusion mode \"" + name + "\"");
}

namespace {
void check_fusion_operands(const Tensor& r, const Tensor& h) {
  if (!r.defined() || !h.defined() || r.rank() != 2 || h.rank() != 2 || r.dim(0) == 0 || h.dim(0) == 0) {
    throw ShapeError("fusion: both structure memories must be non-empty matrices");
  }
  if (r.dim(1) != h.dim(1)) {
    throw ShapeError("fusion: SC rows " + shape_str(r.shape()) + " and SG rows " + shape_str(h.shape()) +
                     " differ in width");
  }
}
}  // namespace

Tensor fusion_scores(const Tensor& sc_rows, const Tensor& sg_rows, double scale_dim) {
  check_fusion_operands(sc_rows, sg_rows);
  if (!(scale_dim > 0.0)) throw ConfigError("fusion: scaling factor must be positive");
  return scale(matmul_nt(sc_rows, sg_rows), 1.0 / std::sqrt(scale_dim));
}

Tensor fusion_attention(const Tensor& sc_rows, const Tensor& sg_rows, double scale_dim) {
  return softmax(fusion_scores(sc_rows, sg_rows, scale_dim), 1);
}

Tensor fuse_structures(const Tensor& sc_rows, const Tensor& sg_rows, double scale_dim, FusionMode mode) {
  if (mode == FusionMode::kAttention) {
    return add(sc_rows, matmul(fusion_attention(sc_rows, sg_rows, scale_dim), sg_rows));
  }
  check_fusion_operands(sc_rows, sg_rows);
  const std::size_t n = sc_rows.dim(0);
  Tensor pooled = mean_axis(sg_rows, 0);
  std::vector<Tensor> copies(n, pooled);
  Tensor joint = concat(std::vector<Tensor>{sc_rows, concat(copies, 0)}, 1);
  Tensor weights = softmax(scale(matmul_nt(joint, joint), 1.0 / std::sqrt(scale_dim)), 1);
  return matmul(weights, sc_rows);
}

}  // namespace pivotcap
