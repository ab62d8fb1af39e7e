#include "pivotcap/back_translation.hpp"

#include <csignal>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "pivotcap/ops.hpp"

namespace pivotcap {

std::vector<std::vector<double>> LabelProjectionGenerator::generate(const SceneGraph& g) const {
  std::vector<std::vector<double>> rows;
  for (const auto& n : g.nodes) rows.push_back(label_feature(n.label, spec_));
  return rows;
}

LineProcess::LineProcess(std::string command) : command_(std::move(command)) {
  std::signal(SIGPIPE, SIG_IGN);
  int in[2], out[2];
  if (pipe(in) != 0 || pipe(out) != 0) throw Error("oracle: cannot create pipes for \"" + command_ + "\"");
  pid_ = fork();
  if (pid_ < 0) throw Error("oracle: cannot fork for \"" + command_ + "\"");
  if (pid_ == 0) {
    dup2(in[0], STDIN_FILENO);
    dup2(out[1], STDOUT_FILENO);
    close(in[0]);
    close(in[1]);
    close(out[0]);
    close(out[1]);
    execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in[0]);
  close(out[1]);
  to_child_ = in[1];
  from_child_ = out[0];
}

LineProcess::~LineProcess() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) waitpid(pid_, nullptr, 0);
}

std::string LineProcess::exchange(const std::string& request) const {
  std::lock_guard<std::mutex> lock(mutex_);
  const std::string line = request + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t w = write(to_child_, line.data() + written, line.size() - written);
    if (w <= 0) throw Error("oracle \"" + command_ + "\": write failed (process exited?)");
    written += static_cast<std::size_t>(w);
  }
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string response = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      if (!response.empty() && response.back() == '\r') response.pop_back();
      return response;
    }
    char chunk[4096];
    const ssize_t r = read(from_child_, chunk, sizeof chunk);
    if (r <= 0) throw Error("oracle \"" + command_ + "\": no response line (process exited?)");
    buffer_.append(chunk, static_cast<std::size_t>(r));
  }
}

namespace {

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

Caption SubprocessTranslator::translate(const Caption& target) const {
  std::istringstream in(process_.exchange(join(target.tokens)));
  Caption out{Language::kPivot, {}};
  for (std::string w; in >> w;) out.tokens.push_back(w);
  return out;
}

std::vector<std::vector<double>> SubprocessGenerator::generate(const SceneGraph& g) const {
  std::vector<std::string> labels;
  for (const auto& n : g.nodes) labels.push_back(n.label);
  std::istringstream in(process_.exchange(join(labels)));
  std::vector<double> flat;
  for (std::string tok; in >> tok;) {
    try {
      std::size_t used = 0;
      flat.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw Error("oracle \"" + process_.command() + "\": \"" + tok + "\" is not a number");
    }
  }
  if (flat.size() != g.nodes.size() * width_) {
    throw Error("oracle \"" + process_.command() + "\": expected " + std::to_string(g.nodes.size() * width_) +
                " numbers, got " + std::to_string(flat.size()));
  }
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    rows.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * width_),
                      flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * width_));
  return rows;
}

std::unique_ptr<TargetToPivotTranslator> make_translator(const std::string& spec, const ToyGrammarPair& grammar) {
  if (spec == "dictionary") return std::make_unique<DictionaryTranslator>(grammar);
  if (spec == "identity") return std::make_unique<IdentityTranslator>();
  if (spec.rfind("subprocess:", 0) == 0) return std::make_unique<SubprocessTranslator>(spec.substr(11));
  throw ConfigError("unknown translator \"" + spec + "\" (expected dictionary, identity or subprocess:<command>)");
}

std::unique_ptr<SceneGraphToImageGenerator> make_generator(const std::string& spec, const FeatureSpec& features) {
  if (spec == "label_projection") return std::make_unique<LabelProjectionGenerator>(features);
  if (spec.rfind("subprocess:", 0) == 0) return std::make_unique<SubprocessGenerator>(spec.substr(11), features.width);
  throw ConfigError("unknown generator \"" + spec + "\" (expected label_projection or subprocess:<command>)");
}

namespace {

BackTranslationResult finish(std::vector<Tensor>& losses, std::size_t skipped) {
  BackTranslationResult r;
  r.used = losses.size();
  r.skipped = skipped;
  if (losses.empty()) {
    r.loss = Tensor::scalar(0.0);
    return r;
  }
  std::vector<Tensor> rows;
  for (auto& l : losses) rows.push_back(reshape(l, {1}));
  r.loss = mean(concat(rows, 0));
  return r;
}

}  // namespace

BackTranslationResult ipb_loss(const PivotCaptioner& model, const std::vector<const Example*>& batch,
                               const TargetToPivotTranslator& translator, const CaptionParser& parser) {
  std::vector<Tensor> losses;
  std::size_t skipped = 0;
  for (const Example* ex : batch) {
    Caption target = model.predict(ex->visual_sg, parser).target;
    if (target.tokens.empty()) {
      ++skipped;
      continue;
    }
    Caption pseudo = translator.translate(target);
    SceneGraph g = parser.derive_scene_graph(pseudo);
    if (pseudo.tokens.empty() || g.nodes.empty()) {
      ++skipped;
      continue;
    }
    losses.push_back(model.caption_nll(g, ex->pivot));
  }
  return finish(losses, skipped);
}

BackTranslationResult ptb_loss(const PivotCaptioner& model, const std::vector<const Example*>& batch,
                               const SceneGraphToImageGenerator& generator, const CaptionParser& parser) {
  std::vector<Tensor> losses;
  std::size_t skipped = 0;
  for (const Example* ex : batch) {
    SceneGraph image = ex->language_sg;
    image.features = generator.generate(image);
    Tensor h = model.encode_sg(image);
    Caption pivot;
    {
      NoGradGuard no_grad;
      pivot = model.vocab().pivot.decode(model.pivot_decoder().greedy(h, Language::kPivot));
    }
    if (pivot.tokens.empty()) {
      ++skipped;
      continue;
    }
    losses.push_back(model.translation_nll_from(h, parser.parse_tree(pivot), ex->target));
  }
  return finish(losses, skipped);
}

}  // namespace pivotcap
