#pragma once

#include <string>
#include <vector>

#include "pivotcap/metrics.hpp"
#include "pivotcap/model.hpp"

namespace pivotcap {

inline constexpr const char* kMetricsSchema = "pivotcap.metrics/1";

struct Evaluation {
  MetricReport pivot;
  MetricReport target;
  std::vector<Prediction> predictions;
};

// Greedy image -> pivot -> target on every example. Caption metrics use the
// example's gold captions as single references. beta_g compares the image
// SG with the SG derived from the generated caption; beta_c compares the
// generated pivot's tree with the generated target's tree.
Evaluation evaluate_model(const PivotCaptioner& model, const std::vector<Example>& examples,
                          const ToyGrammarPair& grammar);

// {"schema": ..., "samples": n, "pivot": {...}, "target": {...}}
std::string evaluation_json(const Evaluation& e);
std::string report_json(const MetricReport& r);
// Fixed-order human-readable table.
std::string evaluation_table(const Evaluation& e);

inline constexpr const char* kProbeSchema = "pivotcap.probe/1";

// Structure-coincidence probe on generated captions, with the same rates
// computed on the gold structures for reference.
struct AlignmentProbe {
  double beta_g_pivot = 0.0;
  double beta_g_target = 0.0;
  double beta_c = 0.0;
  double gold_beta_g = 0.0;  // image SG vs language SG
  double gold_beta_c = 0.0;  // gold pivot tree vs gold target tree
  std::size_t samples = 0;
};

AlignmentProbe probe_alignment(const Evaluation& e, const std::vector<Example>& examples);
std::string probe_json(const AlignmentProbe& p);
std::string probe_table(const AlignmentProbe& p);

}  // namespace pivotcap
