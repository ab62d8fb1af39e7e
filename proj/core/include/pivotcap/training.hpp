#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pivotcap/back_translation.hpp"
#include "pivotcap/config.hpp"

namespace pivotcap {

// ---------------------------------------------------------------------------
// Checkpoints

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint32_t stage = 0;
  std::uint64_t step = 0;
  std::string fingerprint;
  std::vector<NamedTensor> params;
};

Checkpoint snapshot(const ParameterStore& store, std::uint32_t stage, std::uint64_t step, std::string fingerprint);
// Copies values into the store; names and shapes must match exactly.
void restore(ParameterStore& store, const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Elementwise mean; the result carries the last checkpoint's stage/step.
Checkpoint average_checkpoints(const std::vector<Checkpoint>& ckpts);

// ---------------------------------------------------------------------------
// Optimization

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void reset();
  void set_learning_rate(double lr) { lr_ = lr; }
  // Applies one update from the parameters' current gradients.
  void step(ParameterStore& store);
  std::size_t steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales all gradients so their joint norm is at most max_norm; returns the
// norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

// Stage-4 weights at `step` of a stage with `steps` steps: start at step 0,
// end at step steps-1.
LossWeights stage4_lambda(const TrainingConfig& cfg, std::size_t step, std::size_t steps);

// ---------------------------------------------------------------------------
// Losses on a batch

struct Batch {
  std::vector<const Example*> caption;
  std::vector<const Example*> parallel;
};

// Deterministic function of (seed, stage, step).
Batch sample_batch(const Dataset& data, std::uint64_t seed, int stage, std::size_t step, std::size_t size);

struct Objectives {
  std::array<std::optional<Tensor>, kObjectiveCount> terms;
  std::size_t skipped = 0;  // back-translation samples without a usable generation
  std::size_t empty_alignments = 0;  // samples whose pair set was empty
};

class ObjectiveSuite {
 public:
  ObjectiveSuite(const PivotCaptioner& model, const TrainingConfig& cfg, const ToyGrammarPair& grammar);

  Tensor caption(const std::vector<const Example*>& batch) const;
  Tensor translation(const std::vector<const Example*>& batch) const;
  Tensor cma(const std::vector<const Example*>& batch, std::size_t* empty = nullptr) const;
  Tensor cla(const std::vector<const Example*>& batch, std::size_t* empty = nullptr) const;
  BackTranslationResult ipb(const std::vector<const Example*>& batch) const;
  BackTranslationResult ptb(const std::vector<const Example*>& batch) const;

  // Computes the objectives whose flag is set.
  Objectives compute(const Batch& batch, const std::array<bool, kObjectiveCount>& which) const;

  const TargetToPivotTranslator& translator() const { return *translator_; }
  const SceneGraphToImageGenerator& generator() const { return *generator_; }

 private:
  const PivotCaptioner& model_;
  const TrainingConfig& cfg_;
  const ToyGrammarPair& grammar_;
  std::unique_ptr<TargetToPivotTranslator> translator_;
  std::unique_ptr<SceneGraphToImageGenerator> generator_;
};

// ---------------------------------------------------------------------------
// Staged training

struct StepRecord {
  int stage = 0;
  std::size_t step = 0;
  LossWeights lambda{};
  std::array<std::optional<double>, kObjectiveCount> components;
  double total = 0.0;
  double grad_norm = 0.0;
  std::size_t skipped = 0;
};

std::string to_json_line(const StepRecord& r);

// Runs stages, writing into out_dir (when non-empty):
//   checkpoints/ckpt_s<stage>_<step>.bin   every checkpoint_interval steps and at stage end
//   checkpoints.json                       ordered list of those files
//   stage<n>.bin                           parameters after stage n
//   train_log_stage<n>.jsonl               one StepRecord per step
//   final.bin                              mean of the last average_last_k checkpoints
class Trainer {
 public:
  Trainer(PivotCaptioner& model, const Dataset& data, const TrainingConfig& cfg, const ToyGrammarPair& grammar,
          std::filesystem::path out_dir = {});

  void run_stage(int stage);
  // Runs the requested stages in order. When the first requested stage n > 1
  // and out_dir holds stage<n-1>.bin, training resumes from it.
  std::filesystem::path run(const std::set<int>& stages);
  // Averages the recorded checkpoints into the model (and final.bin).
  Checkpoint finalize();

  const std::vector<StepRecord>& log() const { return log_; }
  const std::vector<std::filesystem::path>& checkpoint_files() const { return checkpoint_files_; }
  const ObjectiveSuite& objectives() const { return suite_; }

 private:
  void record_checkpoint(int stage, std::size_t step);
  void load_checkpoint_list();
  void write_checkpoint_list() const;

  PivotCaptioner& model_;
  const Dataset& data_;
  TrainingConfig cfg_;
  std::filesystem::path out_dir_;
  ObjectiveSuite suite_;
  Adam adam_;
  std::vector<StepRecord> log_;
  std::vector<std::filesystem::path> checkpoint_files_;
  std::vector<Checkpoint> checkpoints_;  // used when out_dir is empty
  std::string fingerprint_;
};

}  // namespace pivotcap
