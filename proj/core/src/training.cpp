#include "pivotcap/training.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "pivotcap/ops.hpp"

namespace pivotcap {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Checkpoints

Checkpoint snapshot(const ParameterStore& store, std::uint32_t stage, std::uint64_t step, std::string fingerprint) {
  Checkpoint c{stage, step, std::move(fingerprint), {}};
  for (const auto& p : store.params()) {
    const auto d = p.tensor.data();
    c.params.push_back({p.name, p.tensor.shape(), std::vector<double>(d.begin(), d.end())});
  }
  return c;
}

void restore(ParameterStore& store, const Checkpoint& ckpt) {
  if (ckpt.params.size() != store.size()) {
    throw ShapeError("checkpoint has " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                     std::to_string(store.size()));
  }
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto& src = ckpt.params[i];
    const auto& dst = store.params()[i];
    if (src.name != dst.name) {
      throw ShapeError("checkpoint parameter " + std::to_string(i) + " is \"" + src.name + "\", model expects \"" +
                       dst.name + "\"");
    }
    if (src.shape != dst.tensor.shape()) {
      throw ShapeError("checkpoint parameter \"" + src.name + "\" has shape " + shape_str(src.shape) +
                       ", model expects " + shape_str(dst.tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    Tensor t = store.params()[i].tensor;
    std::copy(ckpt.params[i].values.begin(), ckpt.params[i].values.end(), t.mutable_data().begin());
  }
}

namespace {

constexpr char kMagic[4] = {'P', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::string& path) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw SchemaError(path + ": truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& in, const std::string& path) {
  const auto n = take<std::uint32_t>(in, path);
  if (n > (1u << 20)) throw SchemaError(path + ": implausible string length " + std::to_string(n));
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw SchemaError(path + ": truncated checkpoint");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, ckpt.stage);
  put<std::uint64_t>(out, ckpt.step);
  put_string(out, ckpt.fingerprint);
  put<std::uint64_t>(out, ckpt.params.size());
  for (const auto& p : ckpt.params) {
    put_string(out, p.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) put<std::uint64_t>(out, d);
    for (double v : p.values) put<double>(out, v);
  }
  if (!out) throw Error("write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  const std::string p = path.string();
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw SchemaError(p + ": not a checkpoint file");
  const auto version = take<std::uint32_t>(in, p);
  if (version != kVersion) throw SchemaError(p + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.stage = take<std::uint32_t>(in, p);
  c.step = take<std::uint64_t>(in, p);
  c.fingerprint = take_string(in, p);
  const auto count = take<std::uint64_t>(in, p);
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = take_string(in, p);
    const auto ndim = take<std::uint32_t>(in, p);
    if (ndim > 8) throw SchemaError(p + ": parameter \"" + t.name + "\" has " + std::to_string(ndim) + " dims");
    for (std::uint32_t d = 0; d < ndim; ++d) t.shape.push_back(static_cast<std::size_t>(take<std::uint64_t>(in, p)));
    const std::size_t n = shape_numel(t.shape);
    t.values.resize(n);
    for (auto& v : t.values) v = take<double>(in, p);
    c.params.push_back(std::move(t));
  }
  return c;
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts) {
  if (ckpts.empty()) throw Error("average_checkpoints: no checkpoints");
  Checkpoint out = ckpts.back();
  const auto& ref = ckpts.front().params;
  for (const auto& c : ckpts) {
    if (c.params.size() != ref.size()) throw ShapeError("average_checkpoints: parameter counts differ");
    for (std::size_t i = 0; i < ref.size(); ++i) {
      if (c.params[i].name != ref[i].name) {
        throw ShapeError("average_checkpoints: parameter \"" + c.params[i].name + "\" where \"" + ref[i].name +
                         "\" was expected");
      }
      if (c.params[i].shape != ref[i].shape) {
        throw ShapeError("average_checkpoints: parameter \"" + ref[i].name + "\" has shapes " +
                         shape_str(ref[i].shape) + " and " + shape_str(c.params[i].shape));
      }
    }
  }
  const double k = static_cast<double>(ckpts.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    auto& vals = out.params[i].values;
    for (std::size_t e = 0; e < vals.size(); ++e) {
      double s = 0.0;
      for (const auto& c : ckpts) s += c.params[i].values[e];
      vals[e] = s / k;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimization

void Adam::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

void Adam::step(ParameterStore& store) {
  const auto& params = store.params();
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.tensor.numel(), 0.0);
      v_.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    auto w = t.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t e = 0; e < w.size(); ++e) {
      m[e] = b1_ * m[e] + (1.0 - b1_) * g[e];
      v[e] = b2_ * v[e] + (1.0 - b2_) * g[e] * g[e];
      w[e] -= lr_ * (m[e] / c1) / (std::sqrt(v[e] / c2) + eps_);
    }
  }
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.params()) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (const auto& p : store.params()) {
      Tensor t = p.tensor;
      if (!t.has_grad()) continue;
      for (double& g : t.mutable_grad()) g *= f;
    }
  }
  return norm;
}

LossWeights stage4_lambda(const TrainingConfig& cfg, std::size_t step, std::size_t steps) {
  if (steps <= 1) return cfg.lambda_start;
  LossWeights w{};
  const double frac = static_cast<double>(step) / static_cast<double>(steps - 1);
  for (std::size_t i = 0; i < kObjectiveCount; ++i) {
    w[i] = step + 1 == steps ? cfg.lambda_end[i] : (1.0 - frac) * cfg.lambda_start[i] + frac * cfg.lambda_end[i];
  }
  return w;
}

// ---------------------------------------------------------------------------
// Objectives

Batch sample_batch(const Dataset& data, std::uint64_t seed, int stage, std::size_t step, std::size_t size) {
  if (data.caption.empty() || data.parallel.empty()) throw Error("training needs non-empty caption and parallel splits");
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(stage), step));
  Batch b;
  for (std::size_t i = 0; i < size; ++i) b.caption.push_back(&data.caption[rng.below(data.caption.size())]);
  for (std::size_t i = 0; i < size; ++i) b.parallel.push_back(&data.parallel[rng.below(data.parallel.size())]);
  return b;
}

ObjectiveSuite::ObjectiveSuite(const PivotCaptioner& model, const TrainingConfig& cfg, const ToyGrammarPair& grammar)
    : model_(model),
      cfg_(cfg),
      grammar_(grammar),
      translator_(make_translator(cfg.translator, grammar)),
      generator_(make_generator(cfg.generator, cfg.corpus.features)) {}

namespace {
Tensor batch_mean(std::vector<Tensor>& terms) {
  if (terms.empty()) throw Error("objective: empty batch");
  std::vector<Tensor> rows;
  for (auto& t : terms) rows.push_back(reshape(t, {1}));
  return mean(concat(rows, 0));
}
}  // namespace

Tensor ObjectiveSuite::caption(const std::vector<const Example*>& batch) const {
  std::vector<Tensor> terms;
  for (const auto* ex : batch) terms.push_back(model_.caption_nll(ex->visual_sg, ex->pivot));
  return batch_mean(terms);
}

Tensor ObjectiveSuite::translation(const std::vector<const Example*>& batch) const {
  std::vector<Tensor> terms;
  for (const auto* ex : batch) terms.push_back(model_.translation_nll(ex->language_sg, ex->pivot_tree, ex->target));
  return batch_mean(terms);
}

Tensor ObjectiveSuite::cma(const std::vector<const Example*>& batch, std::size_t* empty) const {
  std::vector<Tensor> terms;
  for (const auto* ex : batch) {
    auto r = cma_loss(model_, ex->visual_sg, ex->language_sg, cfg_.align);
    if (r.empty && empty) ++*empty;
    terms.push_back(r.loss);
  }
  return batch_mean(terms);
}

Tensor ObjectiveSuite::cla(const std::vector<const Example*>& batch, std::size_t* empty) const {
  std::vector<Tensor> terms;
  for (const auto* ex : batch) {
    auto r = cla_loss(model_, ex->pivot_tree, ex->target_tree, cfg_.align);
    if (r.empty && empty) ++*empty;
    terms.push_back(r.loss);
  }
  return batch_mean(terms);
}

BackTranslationResult ObjectiveSuite::ipb(const std::vector<const Example*>& batch) const {
  return ipb_loss(model_, batch, *translator_, grammar_);
}

BackTranslationResult ObjectiveSuite::ptb(const std::vector<const Example*>& batch) const {
  return ptb_loss(model_, batch, *generator_, grammar_);
}

Objectives ObjectiveSuite::compute(const Batch& batch, const std::array<bool, kObjectiveCount>& which) const {
  Objectives o;
  auto on = [&](Objective k) { return which[static_cast<std::size_t>(k)]; };
  auto slot = [&](Objective k) -> std::optional<Tensor>& { return o.terms[static_cast<std::size_t>(k)]; };
  if (on(Objective::kCap)) slot(Objective::kCap) = caption(batch.caption);
  if (on(Objective::kTrans)) slot(Objective::kTrans) = translation(batch.parallel);
  if (on(Objective::kCma)) slot(Objective::kCma) = cma(batch.caption, &o.empty_alignments);
  if (on(Objective::kCla)) slot(Objective::kCla) = cla(batch.parallel, &o.empty_alignments);
  if (on(Objective::kIpb)) {
    auto r = ipb(batch.caption);
    o.skipped += r.skipped;
    slot(Objective::kIpb) = r.loss;
  }
  if (on(Objective::kPtb)) {
    auto r = ptb(batch.parallel);
    o.skipped += r.skipped;
    slot(Objective::kPtb) = r.loss;
  }
  return o;
}

// ---------------------------------------------------------------------------
// Trainer

std::string to_json_line(const StepRecord& r) {
  json j = {{"stage", r.stage}, {"step", r.step}, {"total", r.total}, {"grad_norm", r.grad_norm}, {"skipped", r.skipped}};
  json lambda = json::object(), comps = json::object();
  for (std::size_t i = 0; i < kObjectiveCount; ++i) {
    const std::string k = to_string(static_cast<Objective>(i));
    lambda[k] = r.lambda[i];
    comps[k] = r.components[i] ? json(*r.components[i]) : json(nullptr);
  }
  j["lambda"] = lambda;
  j["loss"] = comps;
  return j.dump();
}

Trainer::Trainer(PivotCaptioner& model, const Dataset& data, const TrainingConfig& cfg, const ToyGrammarPair& grammar,
                 std::filesystem::path out_dir)
    : model_(model),
      data_(data),
      cfg_(cfg),
      out_dir_(std::move(out_dir)),
      suite_(model, cfg_, grammar),
      adam_(cfg.learning_rate),
      fingerprint_(config_fingerprint(cfg)) {
  validate(cfg_);
  if (!out_dir_.empty()) {
    std::filesystem::create_directories(out_dir_ / "checkpoints");
    load_checkpoint_list();
  }
}

void Trainer::load_checkpoint_list() {
  checkpoint_files_.clear();
  const auto path = out_dir_ / "checkpoints.json";
  if (!std::filesystem::exists(path)) return;
  std::ifstream in(path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("checkpoints")) throw SchemaError(path.string() + ": malformed checkpoint list");
  for (const auto& f : j["checkpoints"]) checkpoint_files_.push_back(out_dir_ / f.get<std::string>());
}

void Trainer::write_checkpoint_list() const {
  json files = json::array();
  for (const auto& f : checkpoint_files_) files.push_back(std::filesystem::relative(f, out_dir_).generic_string());
  std::ofstream out(out_dir_ / "checkpoints.json");
  out << json{{"schema", "pivotcap.checkpoints/1"}, {"checkpoints", files}}.dump(2) << "\n";
}

void Trainer::record_checkpoint(int stage, std::size_t step) {
  Checkpoint c = snapshot(model_.store(), static_cast<std::uint32_t>(stage), step, fingerprint_);
  if (out_dir_.empty()) {
    checkpoints_.push_back(std::move(c));
    return;
  }
  const auto path = out_dir_ / "checkpoints" / ("ckpt_s" + std::to_string(stage) + "_" + std::to_string(step) + ".bin");
  save_checkpoint(path, c);
  // A re-run of a stage replaces its earlier entries.
  std::erase(checkpoint_files_, path);
  checkpoint_files_.push_back(path);
  write_checkpoint_list();
}

void Trainer::run_stage(int stage) {
  if (stage < 1 || stage > 4) throw ConfigError("stage must be 1-4, got " + std::to_string(stage));
  const std::size_t steps = cfg_.stage_steps[static_cast<std::size_t>(stage - 1)];
  adam_.reset();
  adam_.set_learning_rate(cfg_.learning_rate * cfg_.stage_lr_scale[static_cast<std::size_t>(stage - 1)]);
  if (!out_dir_.empty()) {
    std::erase_if(checkpoint_files_, [&](const std::filesystem::path& p) {
      return p.filename().string().rfind("ckpt_s" + std::to_string(stage) + "_", 0) == 0;
    });
  }
  std::ofstream log_file;
  if (!out_dir_.empty()) log_file.open(out_dir_ / ("train_log_stage" + std::to_string(stage) + ".jsonl"));
  for (std::size_t step = 0; step < steps; ++step) {
    StepRecord rec;
    rec.stage = stage;
    rec.step = step;
    std::array<bool, kObjectiveCount> which{};
    LossWeights w{};
    auto set = [&](Objective o, double weight) {
      which[static_cast<std::size_t>(o)] = true;
      w[static_cast<std::size_t>(o)] = weight;
    };
    switch (stage) {
      case 1:
        set(step % 2 == 0 ? Objective::kCap : Objective::kTrans, 1.0);
        break;
      case 2:
        if (cfg_.use_cma) set(Objective::kCma, 1.0);
        if (cfg_.use_cla) set(Objective::kCla, 1.0);
        break;
      case 3:
        set(Objective::kIpb, 1.0);
        set(Objective::kPtb, 1.0);
        break;
      default: {
        const LossWeights lam = stage4_lambda(cfg_, step, steps);
        for (std::size_t i = 0; i < kObjectiveCount; ++i) {
          const auto o = static_cast<Objective>(i);
          if ((o == Objective::kCma && !cfg_.use_cma) || (o == Objective::kCla && !cfg_.use_cla)) continue;
          if (lam[i] > 0.0) set(o, lam[i]);
        }
        rec.lambda = lam;
        if (!cfg_.use_cma) rec.lambda[static_cast<std::size_t>(Objective::kCma)] = 0.0;
        if (!cfg_.use_cla) rec.lambda[static_cast<std::size_t>(Objective::kCla)] = 0.0;
        break;
      }
    }
    if (stage != 4) rec.lambda = w;

    const Batch batch = sample_batch(data_, cfg_.seed, stage, step, cfg_.batch_size);
    Objectives obj = suite_.compute(batch, which);
    rec.skipped = obj.skipped;
    std::optional<Tensor> total;
    for (std::size_t i = 0; i < kObjectiveCount; ++i) {
      if (!obj.terms[i]) continue;
      rec.components[i] = obj.terms[i]->item();
      Tensor term = scale(*obj.terms[i], w[i]);
      total = total ? add(*total, term) : term;
    }
    model_.store().zero_grad();
    if (total) {
      rec.total = total->item();
      if (total->requires_grad()) backward(*total);
    }
    rec.grad_norm = clip_grad_norm(model_.store(), cfg_.clip_norm);
    adam_.step(model_.store());
    log_.push_back(rec);
    if (log_file) log_file << to_json_line(rec) << "\n";
    if ((step + 1) % cfg_.checkpoint_interval == 0 || step + 1 == steps) record_checkpoint(stage, step + 1);
  }
  if (!out_dir_.empty()) {
    save_checkpoint(out_dir_ / ("stage" + std::to_string(stage) + ".bin"),
                    snapshot(model_.store(), static_cast<std::uint32_t>(stage), steps, fingerprint_));
  }
}

std::filesystem::path Trainer::run(const std::set<int>& stages) {
  for (int s : stages)
    if (s < 1 || s > 4) throw ConfigError("stage must be 1-4, got " + std::to_string(s));
  if (!stages.empty() && !out_dir_.empty()) {
    const int first = *stages.begin();
    const auto prev = out_dir_ / ("stage" + std::to_string(first - 1) + ".bin");
    if (first > 1 && std::filesystem::exists(prev)) restore(model_.store(), load_checkpoint(prev));
  }
  for (int s : stages) run_stage(s);
  finalize();
  return out_dir_.empty() ? std::filesystem::path() : out_dir_ / "final.bin";
}

Checkpoint Trainer::finalize() {
  std::vector<Checkpoint> last;
  if (out_dir_.empty()) {
    const std::size_t n = std::min(cfg_.average_last_k, checkpoints_.size());
    last.assign(checkpoints_.end() - static_cast<std::ptrdiff_t>(n), checkpoints_.end());
  } else {
    const std::size_t n = std::min(cfg_.average_last_k, checkpoint_files_.size());
    for (std::size_t i = checkpoint_files_.size() - n; i < checkpoint_files_.size(); ++i)
      last.push_back(load_checkpoint(checkpoint_files_[i]));
  }
  Checkpoint avg = last.empty() ? snapshot(model_.store(), 0, 0, fingerprint_) : average_checkpoints(last);
  restore(model_.store(), avg);
  if (!out_dir_.empty()) save_checkpoint(out_dir_ / "final.bin", avg);
  return avg;
}

}  // namespace pivotcap
