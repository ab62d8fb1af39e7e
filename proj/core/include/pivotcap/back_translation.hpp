#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "pivotcap/model.hpp"

namespace pivotcap {

class TargetToPivotTranslator {
 public:
  virtual ~TargetToPivotTranslator() = default;
  virtual Caption translate(const Caption& target) const = 0;
};

class SceneGraphToImageGenerator {
 public:
  virtual ~SceneGraphToImageGenerator() = default;
  // One feature row per node.
  virtual std::vector<std::vector<double>> generate(const SceneGraph& g) const = 0;
  virtual std::size_t width() const = 0;
};

// Inverse dictionary plus constituent reordering of the toy grammar pair.
class DictionaryTranslator : public TargetToPivotTranslator {
 public:
  explicit DictionaryTranslator(const ToyGrammarPair& grammar) : grammar_(grammar) {}
  Caption translate(const Caption& target) const override { return grammar_.translate_to_pivot(target); }

 private:
  const ToyGrammarPair& grammar_;
};

// Passes tokens through unchanged, relabelled as pivot.
class IdentityTranslator : public TargetToPivotTranslator {
 public:
  Caption translate(const Caption& target) const override { return {Language::kPivot, target.tokens}; }
};

// The corpus' noiseless per-label feature vector for every node.
class LabelProjectionGenerator : public SceneGraphToImageGenerator {
 public:
  explicit LabelProjectionGenerator(FeatureSpec spec) : spec_(spec) {}
  std::vector<std::vector<double>> generate(const SceneGraph& g) const override;
  std::size_t width() const override { return spec_.width; }

 private:
  FeatureSpec spec_;
};

// Long-lived child process speaking one request line / one response line.
class LineProcess {
 public:
  explicit LineProcess(std::string command);
  ~LineProcess();
  LineProcess(const LineProcess&) = delete;
  LineProcess& operator=(const LineProcess&) = delete;

  std::string exchange(const std::string& request) const;
  const std::string& command() const { return command_; }

 private:
  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  mutable std::string buffer_;
  mutable std::mutex mutex_;
};

// Request: target tokens separated by single spaces. Response: pivot tokens.
class SubprocessTranslator : public TargetToPivotTranslator {
 public:
  explicit SubprocessTranslator(const std::string& command) : process_(command) {}
  Caption translate(const Caption& target) const override;

 private:
  LineProcess process_;
};

// Request: node labels separated by single spaces. Response: n * width
// numbers, row-major, separated by whitespace.
class SubprocessGenerator : public SceneGraphToImageGenerator {
 public:
  SubprocessGenerator(const std::string& command, std::size_t width) : process_(command), width_(width) {}
  std::vector<std::vector<double>> generate(const SceneGraph& g) const override;
  std::size_t width() const override { return width_; }

 private:
  LineProcess process_;
  std::size_t width_;
};

// "dictionary", "identity" or "subprocess:<command>".
std::unique_ptr<TargetToPivotTranslator> make_translator(const std::string& spec, const ToyGrammarPair& grammar);
// "label_projection" or "subprocess:<command>".
std::unique_ptr<SceneGraphToImageGenerator> make_generator(const std::string& spec, const FeatureSpec& features);

struct BackTranslationResult {
  Tensor loss;  // mean over used samples; 0 when none
  std::size_t used = 0;
  std::size_t skipped = 0;
};

// Image -> greedy target -> translator -> pseudo pivot; the pivot decoder
// then reconstructs the gold pivot caption from the pseudo pivot's scene
// graph. Samples whose target or pseudo pivot is empty are skipped.
BackTranslationResult ipb_loss(const PivotCaptioner& model, const std::vector<const Example*>& batch,
                               const TargetToPivotTranslator& translator, const CaptionParser& parser);

// Pivot scene graph -> generator -> pseudo image -> greedy pivot -> parsed
// tree -> target decoder NLL of the gold target caption. The pseudo image's
// SG rows keep their gradient through the fusion. Samples whose generated
// pivot is empty are skipped.
BackTranslationResult ptb_loss(const PivotCaptioner& model, const std::vector<const Example*>& batch,
                               const SceneGraphToImageGenerator& generator, const CaptionParser& parser);

}  // namespace pivotcap
