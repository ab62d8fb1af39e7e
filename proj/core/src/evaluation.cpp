#include "pivotcap/evaluation.hpp"

#include <cstdio>

#include <json.hpp>

namespace pivotcap {

using nlohmann::json;

Evaluation evaluate_model(const PivotCaptioner& model, const std::vector<Example>& examples,
                          const ToyGrammarPair& grammar) {
  if (examples.empty()) throw Error("evaluate: no examples");
  Evaluation e;
  std::vector<Tokens> pivot_c, target_c;
  std::vector<std::vector<Tokens>> pivot_r, target_r;
  double bg_pivot = 0.0, bg_target = 0.0, bc = 0.0;
  for (const auto& ex : examples) {
    Prediction p = model.predict(ex.visual_sg, grammar);
    pivot_c.push_back(p.pivot.tokens);
    target_c.push_back(p.target.tokens);
    pivot_r.push_back({ex.pivot.tokens});
    target_r.push_back({ex.target.tokens});
    bg_pivot += sg_coincidence(ex.visual_sg, grammar.derive_scene_graph(p.pivot));
    bg_target += sg_coincidence(ex.visual_sg, grammar.derive_scene_graph(p.target));
    bc += sc_coincidence(p.pivot_tree, grammar.parse_tree(p.target));
    e.predictions.push_back(std::move(p));
  }
  const double n = static_cast<double>(examples.size());
  e.pivot = caption_metrics(pivot_c, pivot_r);
  e.target = caption_metrics(target_c, target_r);
  e.pivot.beta_g = bg_pivot / n;
  e.target.beta_g = bg_target / n;
  e.pivot.beta_c = e.target.beta_c = bc / n;
  return e;
}

namespace {
json to_json(const MetricReport& r) {
  return {{"bleu_1", r.bleu[0]}, {"bleu_2", r.bleu[1]}, {"bleu_3", r.bleu[2]}, {"bleu_4", r.bleu[3]},
          {"rouge_l", r.rouge_l}, {"cider", r.cider},     {"beta_g", r.beta_g},   {"beta_c", r.beta_c},
          {"samples", r.samples}};
}
}  // namespace

std::string report_json(const MetricReport& r) { return to_json(r).dump(); }

std::string evaluation_json(const Evaluation& e) {
  json j = {{"schema", kMetricsSchema},
            {"samples", e.target.samples},
            {"pivot", to_json(e.pivot)},
            {"target", to_json(e.target)}};
  return j.dump(2);
}

std::string evaluation_table(const Evaluation& e) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s %8s %8s %8s %8s\n", "caption", "BLEU-1", "BLEU-2", "BLEU-3",
                "BLEU-4", "ROUGE-L", "CIDEr", "beta_G", "beta_C");
  out += line;
  for (const auto* name : {"pivot", "target"}) {
    const MetricReport& r = std::string(name) == "pivot" ? e.pivot : e.target;
    std::snprintf(line, sizeof line, "%-8s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", name, r.bleu[0],
                  r.bleu[1], r.bleu[2], r.bleu[3], r.rouge_l, r.cider, r.beta_g, r.beta_c);
    out += line;
  }
  return out;
}

AlignmentProbe probe_alignment(const Evaluation& e, const std::vector<Example>& examples) {
  if (examples.empty()) throw Error("probe: no examples");
  AlignmentProbe p;
  p.beta_g_pivot = e.pivot.beta_g;
  p.beta_g_target = e.target.beta_g;
  p.beta_c = e.target.beta_c;
  for (const auto& ex : examples) {
    p.gold_beta_g += sg_coincidence(ex.visual_sg, ex.language_sg);
    p.gold_beta_c += sc_coincidence(ex.pivot_tree, ex.target_tree);
  }
  p.samples = examples.size();
  p.gold_beta_g /= static_cast<double>(p.samples);
  p.gold_beta_c /= static_cast<double>(p.samples);
  return p;
}

std::string probe_json(const AlignmentProbe& p) {
  json j = {{"schema", kProbeSchema},
            {"samples", p.samples},
            {"generated", {{"beta_g_pivot", p.beta_g_pivot}, {"beta_g_target", p.beta_g_target}, {"beta_c", p.beta_c}}},
            {"gold", {{"beta_g", p.gold_beta_g}, {"beta_c", p.gold_beta_c}}}};
  return j.dump(2);
}

std::string probe_table(const AlignmentProbe& p) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%-10s %12s %12s %8s\n%-10s %12.4f %12.4f %8.4f\n%-10s %12.4f %12s %8.4f\n", "structure",
                "beta_G(piv)", "beta_G(tgt)", "beta_C", "generated", p.beta_g_pivot, p.beta_g_target, p.beta_c, "gold",
                p.gold_beta_g, "-", p.gold_beta_c);
  return buf;
}

}  // namespace pivotcap
