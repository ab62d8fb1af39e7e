#include "pivotcap/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pivotcap {

std::string to_string(Objective o) {
  switch (o) {
    case Objective::kCap: return "cap";
    case Objective::kTrans: return "trans";
    case Objective::kCma: return "cma";
    case Objective::kCla: return "cla";
    case Objective::kIpb: return "ipb";
    case Objective::kPtb: return "ptb";
  }
  return "?";
}

void validate(const TrainingConfig& cfg) {
  validate(cfg.model);
  validate(cfg.align);
  for (std::size_t i = 0; i < kObjectiveCount; ++i) {
    if (cfg.lambda_start[i] < 0.0 || cfg.lambda_end[i] < 0.0) {
      throw ConfigError("train.lambda." + to_string(static_cast<Objective>(i)) + " weights must be non-negative");
    }
  }
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  for (double f : cfg.stage_lr_scale)
    if (!(f > 0.0)) throw ConfigError("train.stage*_lr_scale must be positive");
  if (!(cfg.clip_norm > 0.0)) throw ConfigError("train.clip_norm must be positive");
  if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (cfg.checkpoint_interval == 0) throw ConfigError("train.checkpoint_interval must be positive");
  if (cfg.average_last_k == 0) throw ConfigError("train.average_last_k must be at least 1");
  if (cfg.corpus.features.width == 0) throw ConfigError("corpus.feature_width must be positive");
  if (cfg.corpus.features.noise_sigma < 0.0) throw ConfigError("corpus.noise_sigma must be non-negative");
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("config key " + key + ": \"" + s + "\" is not a number");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("config key " + key + ": \"" + s + "\" is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("config key " + key + ": \"" + s + "\" is not a boolean");
}

template <typename T>
ConfigKey uint_key(std::string name, std::string help, T TrainingConfig::*group, std::size_t T::*field) {
  return {name, std::move(help),
          [name, group, field](TrainingConfig& c, const std::string& v) {
            (c.*group).*field = static_cast<std::size_t>(parse_uint(name, v));
          },
          [group, field](const TrainingConfig& c) { return std::to_string((c.*group).*field); }};
}

template <typename T>
ConfigKey double_key(std::string name, std::string help, T TrainingConfig::*group, double T::*field) {
  return {name, std::move(help),
          [name, group, field](TrainingConfig& c, const std::string& v) { (c.*group).*field = parse_double(name, v); },
          [group, field](const TrainingConfig& c) { return fmt_double((c.*group).*field); }};
}

template <typename T>
ConfigKey bool_key(std::string name, std::string help, T TrainingConfig::*group, bool T::*field) {
  return {name, std::move(help),
          [name, group, field](TrainingConfig& c, const std::string& v) { (c.*group).*field = parse_bool(name, v); },
          [group, field](const TrainingConfig& c) { return std::string((c.*group).*field ? "true" : "false"); }};
}

ConfigKey top_uint(std::string name, std::string help, std::size_t TrainingConfig::*field) {
  return {name, std::move(help),
          [name, field](TrainingConfig& c, const std::string& v) {
            c.*field = static_cast<std::size_t>(parse_uint(name, v));
          },
          [field](const TrainingConfig& c) { return std::to_string(c.*field); }};
}

ConfigKey top_double(std::string name, std::string help, double TrainingConfig::*field) {
  return {name, std::move(help),
          [name, field](TrainingConfig& c, const std::string& v) { c.*field = parse_double(name, v); },
          [field](const TrainingConfig& c) { return fmt_double(c.*field); }};
}

ConfigKey top_bool(std::string name, std::string help, bool TrainingConfig::*field) {
  return {name, std::move(help),
          [name, field](TrainingConfig& c, const std::string& v) { c.*field = parse_bool(name, v); },
          [field](const TrainingConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

ConfigKey top_string(std::string name, std::string help, std::string TrainingConfig::*field) {
  return {name, std::move(help), [field](TrainingConfig& c, const std::string& v) { c.*field = v; },
          [field](const TrainingConfig& c) { return c.*field; }};
}

std::vector<ConfigKey> build_keys() {
  std::vector<ConfigKey> k;
  k.push_back({"seed", "master seed for corpus sampling, initialization and batching",
               [](TrainingConfig& c, const std::string& v) { c.seed = parse_uint("seed", v); },
               [](const TrainingConfig& c) { return std::to_string(c.seed); }});

  k.push_back(uint_key("corpus.caption_pairs", "image-caption training pairs", &TrainingConfig::corpus,
                       &CorpusSpec::caption_pairs));
  k.push_back(uint_key("corpus.parallel_pairs", "pivot-target training pairs", &TrainingConfig::corpus,
                       &CorpusSpec::parallel_pairs));
  k.push_back(uint_key("corpus.test_pairs", "held-out test scenes", &TrainingConfig::corpus, &CorpusSpec::test_pairs));
  k.push_back({"corpus.seed", "scene seed base of the generated corpus",
               [](TrainingConfig& c, const std::string& v) { c.corpus.seed = parse_uint("corpus.seed", v); },
               [](const TrainingConfig& c) { return std::to_string(c.corpus.seed); }});
  k.push_back({"corpus.feature_width", "visual feature width",
               [](TrainingConfig& c, const std::string& v) {
                 c.corpus.features.width = static_cast<std::size_t>(parse_uint("corpus.feature_width", v));
               },
               [](const TrainingConfig& c) { return std::to_string(c.corpus.features.width); }});
  k.push_back({"corpus.noise_sigma", "standard deviation of visual feature noise",
               [](TrainingConfig& c, const std::string& v) {
                 c.corpus.features.noise_sigma = parse_double("corpus.noise_sigma", v);
               },
               [](const TrainingConfig& c) { return fmt_double(c.corpus.features.noise_sigma); }});
  k.push_back({"corpus.feature_seed", "seed of the per-label feature vectors",
               [](TrainingConfig& c, const std::string& v) {
                 c.corpus.features.seed = parse_uint("corpus.feature_seed", v);
               },
               [](const TrainingConfig& c) { return std::to_string(c.corpus.features.seed); }});

  k.push_back(uint_key("model.dim", "hidden width of encoders and decoders", &TrainingConfig::model, &ModelConfig::dim));
  k.push_back(uint_key("model.heads", "attention heads", &TrainingConfig::model, &ModelConfig::heads));
  k.push_back(uint_key("model.decoder_layers", "decoder layers", &TrainingConfig::model, &ModelConfig::decoder_layers));
  k.push_back(uint_key("model.ff_dim", "decoder feed-forward width", &TrainingConfig::model, &ModelConfig::ff_dim));
  k.push_back(uint_key("model.max_len", "maximum generated tokens", &TrainingConfig::model, &ModelConfig::max_len));
  k.push_back(uint_key("model.gcn_layers", "graph convolution layers", &TrainingConfig::model, &ModelConfig::gcn_layers));
  k.push_back(bool_key("model.direction_weights", "separate weights for incoming and outgoing messages",
                       &TrainingConfig::model, &ModelConfig::direction_weights));
  k.push_back({"model.fusion", "SG-to-SC fusion: attention or literal",
               [](TrainingConfig& c, const std::string& v) {
                 try {
                   c.model.fusion = fusion_mode_from_string(v);
                 } catch (const ConfigError&) {
                   throw ConfigError("config key model.fusion: \"" + v + "\" is not attention or literal");
                 }
               },
               [](const TrainingConfig& c) { return to_string(c.model.fusion); }});
  k.push_back(bool_key("model.use_sg", "encode scene graphs with the GCN (false: one pooled row)",
                       &TrainingConfig::model, &ModelConfig::use_sg));
  k.push_back(bool_key("model.use_sc", "encode pivot constituency trees (false: flat tree)", &TrainingConfig::model,
                       &ModelConfig::use_sc));
  k.push_back(bool_key("model.use_residual", "fuse SG rows into SC rows before target decoding",
                       &TrainingConfig::model, &ModelConfig::use_residual));

  k.push_back(double_key("align.rho_m", "cross-modal similarity threshold", &TrainingConfig::align,
                         &AlignmentConfig::rho_m));
  k.push_back(double_key("align.rho_l", "cross-lingual similarity threshold", &TrainingConfig::align,
                         &AlignmentConfig::rho_l));
  k.push_back(double_key("align.tau_m", "cross-modal temperature", &TrainingConfig::align, &AlignmentConfig::tau_m));
  k.push_back(double_key("align.tau_l", "cross-lingual temperature", &TrainingConfig::align, &AlignmentConfig::tau_l));
  k.push_back(bool_key("align.include_positive", "include the positive in the contrastive normalizer",
                       &TrainingConfig::align, &AlignmentConfig::include_positive_in_denominator));
  k.push_back(bool_key("align.mean_over_pairs", "divide each sample's alignment loss by its pair count",
                       &TrainingConfig::align, &AlignmentConfig::mean_over_pairs));
  k.push_back(bool_key("align.symmetric_anchors", "add the reverse anchor direction", &TrainingConfig::align,
                       &AlignmentConfig::symmetric_anchors));

  for (std::size_t s = 0; s < 4; ++s) {
    const std::string name = "train.stage" + std::to_string(s + 1) + "_steps";
    k.push_back({name, "optimization steps of stage " + std::to_string(s + 1),
                 [name, s](TrainingConfig& c, const std::string& v) {
                   c.stage_steps[s] = static_cast<std::size_t>(parse_uint(name, v));
                 },
                 [s](const TrainingConfig& c) { return std::to_string(c.stage_steps[s]); }});
    const std::string lr = "train.stage" + std::to_string(s + 1) + "_lr_scale";
    k.push_back({lr, "learning-rate multiplier of stage " + std::to_string(s + 1),
                 [lr, s](TrainingConfig& c, const std::string& v) { c.stage_lr_scale[s] = parse_double(lr, v); },
                 [s](const TrainingConfig& c) { return fmt_double(c.stage_lr_scale[s]); }});
  }
  for (std::size_t i = 0; i < kObjectiveCount; ++i) {
    const std::string obj = to_string(static_cast<Objective>(i));
    for (int end = 0; end < 2; ++end) {
      const std::string name = "train.lambda_" + obj + (end ? "_end" : "_start");
      k.push_back({name, std::string("stage-4 weight of ") + obj + (end ? " at the last step" : " at the first step"),
                   [name, i, end](TrainingConfig& c, const std::string& v) {
                     (end ? c.lambda_end : c.lambda_start)[i] = parse_double(name, v);
                   },
                   [i, end](const TrainingConfig& c) { return fmt_double((end ? c.lambda_end : c.lambda_start)[i]); }});
    }
  }
  k.push_back(top_bool("train.use_cma", "optimize the cross-modal alignment loss", &TrainingConfig::use_cma));
  k.push_back(top_bool("train.use_cla", "optimize the cross-lingual alignment loss", &TrainingConfig::use_cla));
  k.push_back(top_double("train.learning_rate", "Adam step size", &TrainingConfig::learning_rate));
  k.push_back(top_double("train.clip_norm", "global gradient-norm clip", &TrainingConfig::clip_norm));
  k.push_back(top_uint("train.batch_size", "samples per loss per step", &TrainingConfig::batch_size));
  k.push_back(top_uint("train.checkpoint_interval", "steps between checkpoints", &TrainingConfig::checkpoint_interval));
  k.push_back(top_uint("train.average_last_k", "checkpoints averaged into the final model",
                       &TrainingConfig::average_last_k));

  k.push_back(top_string("oracle.translator", "dictionary, identity or subprocess:<command>",
                         &TrainingConfig::translator));
  k.push_back(top_string("oracle.generator", "label_projection or subprocess:<command>", &TrainingConfig::generator));
  return k;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(TrainingConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key \"" + key + "\"");
}

void apply_config_text(TrainingConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected \"key = value\"");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(base, ss.str(), path.string());
  return base;
}

std::string render_config(const TrainingConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

std::string config_fingerprint(const TrainingConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : render_config(cfg)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pivotcap
