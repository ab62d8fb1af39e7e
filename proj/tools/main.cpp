#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "pivotcap/evaluation.hpp"
#include "pivotcap/grad_suite.hpp"
#include "pivotcap/training.hpp"
#include "run_record.hpp"

using namespace pivotcap;
namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "config file of \"key = value\" lines");
    for (const auto& k : config_keys()) options[k.name] = app->add_option("--" + k.name, values[k.name], k.help);
  }

  // Defaults, then the config file, then flags.
  TrainingConfig resolve(const fs::path& fallback_file = {}) const {
    TrainingConfig cfg;
    if (!file.empty()) {
      cfg = load_config(file);
    } else if (!fallback_file.empty() && fs::exists(fallback_file)) {
      cfg = load_config(fallback_file);
    }
    for (const auto& k : config_keys())
      if (options.at(k.name)->count() > 0) set_config_value(cfg, k.name, values.at(k.name));
    validate(cfg);
    return cfg;
  }

  std::vector<fs::path> input_files(const fs::path& fallback_file = {}) const {
    if (!file.empty()) return {file};
    if (!fallback_file.empty() && fs::exists(fallback_file)) return {fallback_file};
    return {};
  }
};

std::set<int> parse_stages(const std::string& text) {
  std::set<int> out;
  for (char c : text) {
    if (c == ',' || c == ' ') continue;
    if (c < '1' || c > '4') throw ConfigError("--stages: expected digits 1-4 separated by commas, got \"" + text + "\"");
    out.insert(c - '0');
  }
  return out;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw Error(std::string(what) + " not found: " + p.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << "\n";
}

std::vector<fs::path> with(std::vector<fs::path> a, const std::vector<fs::path>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Model and data behind an existing checkpoint.
struct Loaded {
  TrainingConfig cfg;
  Dataset data;
  std::unique_ptr<PivotCaptioner> model;
};

Loaded load_trained(const ConfigFlags& flags, const fs::path& checkpoint, const fs::path& manifest) {
  require_file(checkpoint, "checkpoint");
  require_file(manifest, "manifest");
  Loaded l;
  l.cfg = flags.resolve(checkpoint.parent_path() / "config.cfg");
  l.cfg.corpus = manifest_spec(manifest);
  l.data = load_dataset(manifest);
  l.model = std::make_unique<PivotCaptioner>(l.cfg.model, Vocabularies::from_dataset(l.data), l.data.feature_width,
                                             l.cfg.seed);
  restore(l.model->store(), load_checkpoint(checkpoint));
  return l;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-pivoted cross-lingual image captioning on a synthetic bilingual corpus"};
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  ConfigFlags gen_flags, train_flags, eval_flags, probe_flags;

  fs::path gen_out;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus and its manifest");
  gen_flags.attach(gen);
  gen->add_option("--out", gen_out, "output directory")->required();

  fs::path train_data, train_out, train_init;
  std::string train_stages = "1,2,3,4";
  auto* train = app.add_subcommand("train", "run training stages and average the last checkpoints");
  train_flags.attach(train);
  train->add_option("--data", train_data, "dataset manifest.json")->required();
  train->add_option("--out", train_out, "run directory")->required();
  train->add_option("--stages", train_stages, "stages to run, e.g. \"1,2,3,4\"; empty runs none")->capture_default_str();
  train->add_option("--init", train_init, "checkpoint to start from");

  fs::path eval_ckpt, eval_data, eval_out;
  auto* evaluate = app.add_subcommand("evaluate", "caption metrics on the test split");
  eval_flags.attach(evaluate);
  evaluate->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  evaluate->add_option("--data", eval_data, "dataset manifest.json")->required();
  evaluate->add_option("--out", eval_out, "metrics JSON path (default: beside the checkpoint)");

  fs::path probe_ckpt, probe_data, probe_out;
  auto* probe = app.add_subcommand("probe-alignment", "structure coincidence rates on the test split");
  probe_flags.attach(probe);
  probe->add_option("--checkpoint", probe_ckpt, "checkpoint file")->required();
  probe->add_option("--data", probe_data, "dataset manifest.json")->required();
  probe->add_option("--out", probe_out, "probe JSON path (default: beside the checkpoint)");

  std::uint64_t gc_seed = 1;
  fs::path gc_out;
  auto* grad = app.add_subcommand("grad-check", "finite-difference checks of every op and loss");
  grad->add_option("--seed", gc_seed, "seed of the random toys")->capture_default_str();
  grad->add_option("--out", gc_out, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const TrainingConfig cfg = gen_flags.resolve();
      ToyGrammarPair grammar(SceneOntology::standard());
      const fs::path manifest = emit_dataset(cfg.corpus, grammar, gen_out);
      cli::write_run_record({"gen-data", args, cfg, gen_flags.input_files(), manifest_files(manifest)},
                            gen_out / "run_gen-data.json");
      std::cout << manifest.string() << "\n";
      return 0;
    }

    if (*train) {
      require_file(train_data, "manifest");
      TrainingConfig cfg = train_flags.resolve();
      cfg.corpus = manifest_spec(train_data);
      const std::set<int> stages = parse_stages(train_stages);
      ToyGrammarPair grammar(SceneOntology::standard());
      const Dataset data = load_dataset(train_data);
      PivotCaptioner model(cfg.model, Vocabularies::from_dataset(data), data.feature_width, cfg.seed);
      std::vector<fs::path> inputs = with(train_flags.input_files(), manifest_files(train_data));
      if (!train_init.empty()) {
        require_file(train_init, "checkpoint");
        restore(model.store(), load_checkpoint(train_init));
        inputs.push_back(train_init);
      }
      fs::create_directories(train_out);
      write_text(train_out / "config.cfg", render_config(cfg));
      Trainer trainer(model, data, cfg, grammar, train_out);
      const auto t0 = std::chrono::steady_clock::now();
      const fs::path final_path = trainer.run(stages);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      cli::write_run_record({"train", args, cfg, inputs, {train_out / "config.cfg", final_path}},
                            train_out / "run_train.json");
      std::fprintf(stderr, "trained stages \"%s\" in %.1f s\n", train_stages.c_str(), secs);
      std::cout << final_path.string() << "\n";
      return 0;
    }

    if (*evaluate || *probe) {
      const bool is_eval = static_cast<bool>(*evaluate);
      const ConfigFlags& flags = is_eval ? eval_flags : probe_flags;
      const fs::path ckpt = is_eval ? eval_ckpt : probe_ckpt;
      const fs::path manifest = is_eval ? eval_data : probe_data;
      fs::path out = is_eval ? eval_out : probe_out;
      if (out.empty()) {
        out = ckpt;
        out.replace_extension(is_eval ? ".metrics.json" : ".probe.json");
      }
      Loaded l = load_trained(flags, ckpt, manifest);
      ToyGrammarPair grammar(SceneOntology::standard());
      const Evaluation e = evaluate_model(*l.model, l.data.test, grammar);
      if (is_eval) {
        std::cout << evaluation_table(e);
        write_text(out, evaluation_json(e));
      } else {
        const AlignmentProbe p = probe_alignment(e, l.data.test);
        std::cout << probe_table(p);
        write_text(out, probe_json(p));
      }
      fs::path record = out;
      record.replace_extension(".run.json");
      cli::write_run_record({is_eval ? "evaluate" : "probe-alignment", args, l.cfg,
                             with(with(flags.input_files(ckpt.parent_path() / "config.cfg"), {ckpt}),
                                  manifest_files(manifest)),
                             {out}},
                            record);
      return 0;
    }

    if (*grad) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto rows = run_grad_check_suite(gc_seed);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      bool ok = true;
      nlohmann::json j = {{"schema", "pivotcap.gradcheck/1"}, {"seed", gc_seed}, {"tolerance", kGradCheckTolerance}};
      nlohmann::json items = nlohmann::json::array();
      std::printf("%-28s %-5s %12s %s\n", "name", "kind", "max_rel_err", "result");
      for (const auto& r : rows) {
        ok = ok && r.passed;
        std::printf("%-28s %-5s %12.3e %s%s%s\n", r.name.c_str(), r.kind.c_str(), r.max_error,
                    r.passed ? "PASS" : "FAIL", r.note.empty() ? "" : "  ", r.note.c_str());
        items.push_back({{"name", r.name}, {"kind", r.kind}, {"max_error", r.max_error}, {"passed", r.passed},
                         {"note", r.note}});
      }
      std::printf("%zu checks, %s, %.1f s\n", rows.size(), ok ? "all passed" : "FAILURES", secs);
      j["checks"] = items;
      j["passed"] = ok;
      if (!gc_out.empty()) write_text(gc_out, j.dump(2));
      return ok ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
