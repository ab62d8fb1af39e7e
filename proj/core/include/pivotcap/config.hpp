#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pivotcap/alignment.hpp"
#include "pivotcap/corpus.hpp"
#include "pivotcap/model.hpp"

namespace pivotcap {

enum class Objective { kCap, kTrans, kCma, kCla, kIpb, kPtb };
inline constexpr std::size_t kObjectiveCount = 6;
std::string to_string(Objective o);

using LossWeights = std::array<double, kObjectiveCount>;

struct TrainingConfig {
  std::uint64_t seed = 1;
  CorpusSpec corpus;
  ModelConfig model;
  AlignmentConfig align;

  std::array<std::size_t, 4> stage_steps = {6000, 20, 100, 300};
  // Stage-4 weights move linearly from start (first step) to end (last step).
  LossWeights lambda_start = {1.0, 1.0, 0.7, 0.7, 0.3, 0.3};
  LossWeights lambda_end = {0.7, 0.7, 0.7, 0.7, 0.7, 0.7};
  bool use_cma = true;
  bool use_cla = true;

  double learning_rate = 1e-3;
  // Multiplies learning_rate within each stage.
  std::array<double, 4> stage_lr_scale = {1.0, 0.1, 1.0, 1.0};
  double clip_norm = 1.0;
  std::size_t batch_size = 16;
  std::size_t checkpoint_interval = 20;
  std::size_t average_last_k = 10;

  std::string translator = "dictionary";
  std::string generator = "label_projection";
};

void validate(const TrainingConfig& cfg);

// One documented key of the text config format. Keys double as CLI flags.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(TrainingConfig&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

// Throws ConfigError naming the key for unknown keys or bad values.
void set_config_value(TrainingConfig& cfg, const std::string& key, const std::string& value);

// "key = value" lines; '#' starts a comment; blank lines ignored.
TrainingConfig load_config(const std::filesystem::path& path, TrainingConfig base = {});
void apply_config_text(TrainingConfig& cfg, const std::string& text, const std::string& source);

// Canonical "key = value" rendering of every key, in registry order.
std::string render_config(const TrainingConfig& cfg);
// Hex digest of the canonical rendering.
std::string config_fingerprint(const TrainingConfig& cfg);

}  // namespace pivotcap
