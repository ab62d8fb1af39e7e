#include "pivotcap/grad_suite.hpp"

#include <algorithm>
#include <functional>

#include "pivotcap/alignment.hpp"
#include "pivotcap/back_translation.hpp"
#include "pivotcap/grad_check.hpp"
#include "pivotcap/ops.hpp"
#include "pivotcap/training.hpp"

namespace pivotcap {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

using Inputs = std::vector<Tensor>;

struct OpCase {
  std::string name;
  Inputs inputs;
  std::function<Tensor(const Inputs&)> fn;
};

double check_op(const OpCase& c, Rng& rng) {
  const Tensor probe = c.fn(c.inputs);
  std::vector<double> w(probe.numel());
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  const Tensor weights = Tensor::from_data(probe.shape(), w);
  double worst = 0.0;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    worst = std::max(worst, numeric_grad_check(
                                [&](const Tensor&) {
                                  const Tensor y = c.fn(c.inputs);
                                  return y.numel() == 1 ? reshape(y, {}) : sum(mul(y, weights));
                                },
                                c.inputs[i]));
  }
  return worst;
}

std::vector<OpCase> op_cases(Rng& rng) {
  std::vector<OpCase> cs;
  auto r = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(std::move(s), rng, lo, hi); };
  cs.push_back({"add", {r({3, 4}), r({3, 4})}, [](const Inputs& x) { return add(x[0], x[1]); }});
  cs.push_back({"add_broadcast", {r({2, 3, 4}), r({4})}, [](const Inputs& x) { return add(x[0], x[1]); }});
  cs.push_back({"sub", {r({3, 4}), r({4})}, [](const Inputs& x) { return sub(x[0], x[1]); }});
  cs.push_back({"mul", {r({3, 4}), r({3, 4})}, [](const Inputs& x) { return mul(x[0], x[1]); }});
  cs.push_back({"scale", {r({3, 4})}, [](const Inputs& x) { return scale(x[0], -1.7); }});
  // Kept away from the kink so the stencil never straddles it.
  std::vector<double> rv(12);
  for (auto& v : rv) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  cs.push_back({"relu", {Tensor::from_data({3, 4}, rv, true)}, [](const Inputs& x) { return relu(x[0]); }});
  cs.push_back({"exp", {r({3, 4})}, [](const Inputs& x) { return exp(x[0]); }});
  cs.push_back({"log", {r({3, 4}, 0.5, 2.0)}, [](const Inputs& x) { return log(x[0]); }});
  cs.push_back({"matmul", {r({3, 4}), r({4, 5})}, [](const Inputs& x) { return matmul(x[0], x[1]); }});
  cs.push_back({"matmul_nt", {r({3, 4}), r({5, 4})}, [](const Inputs& x) { return matmul_nt(x[0], x[1]); }});
  cs.push_back({"transpose", {r({3, 4})}, [](const Inputs& x) { return transpose(x[0]); }});
  cs.push_back({"reshape", {r({3, 4})}, [](const Inputs& x) { return reshape(x[0], {2, 6}); }});
  cs.push_back({"concat", {r({2, 4}), r({3, 4})}, [](const Inputs& x) { return concat(x, 0); }});
  cs.push_back({"concat_axis1", {r({3, 2}), r({3, 4})}, [](const Inputs& x) { return concat(x, 1); }});
  cs.push_back({"slice", {r({4, 5})}, [](const Inputs& x) { return slice(x[0], 1, 1, 3); }});
  cs.push_back({"softmax", {r({3, 4}, -2.0, 2.0)}, [](const Inputs& x) { return softmax(x[0], 1); }});
  cs.push_back({"softmax_axis0", {r({3, 4}, -2.0, 2.0)}, [](const Inputs& x) { return softmax(x[0], 0); }});
  cs.push_back({"causal_softmax", {r({4, 4}, -2.0, 2.0)}, [](const Inputs& x) { return causal_softmax(x[0]); }});
  cs.push_back({"layer_norm", {r({3, 5}), r({5}), r({5})},
                [](const Inputs& x) { return layer_norm(x[0], x[1], x[2]); }});
  cs.push_back({"embedding", {r({5, 3})}, [](const Inputs& x) {
                  const std::size_t ids[] = {4, 0, 4, 2};
                  return embedding(x[0], ids);
                }});
  cs.push_back({"sum", {r({3, 4})}, [](const Inputs& x) { return sum(x[0]); }});
  cs.push_back({"mean", {r({3, 4})}, [](const Inputs& x) { return mean(x[0]); }});
  cs.push_back({"mean_axis", {r({3, 4})}, [](const Inputs& x) { return mean_axis(x[0], 0); }});
  cs.push_back({"gather", {r({3, 4})}, [](const Inputs& x) {
                  const std::size_t idx[] = {11, 0, 5, 5};
                  return gather(x[0], idx);
                }});
  cs.push_back({"logsumexp", {r({3, 4}, -3.0, 3.0)}, [](const Inputs& x) { return logsumexp(x[0]); }});
  cs.push_back({"l2_normalize_rows", {r({3, 4})}, [](const Inputs& x) { return l2_normalize_rows(x[0]); }});
  cs.push_back({"pair_softmax_nll", {r({4, 5})}, [](const Inputs& x) {
                  const std::pair<std::size_t, std::size_t> p[] = {{0, 1}, {0, 3}, {2, 2}, {3, 0}};
                  return pair_softmax_nll(x[0], p, 0.3, false);
                }});
  cs.push_back({"pair_softmax_nll_inclusive", {r({4, 5})}, [](const Inputs& x) {
                  const std::pair<std::size_t, std::size_t> p[] = {{1, 4}, {2, 2}};
                  return pair_softmax_nll(x[0], p, 0.7, true);
                }});
  cs.push_back({"cross_entropy", {r({4, 6}, -2.0, 2.0)}, [](const Inputs& x) {
                  const std::size_t t[] = {5, 0, kNoIgnore, 3};
                  return cross_entropy(x[0], t);
                }});
  return cs;
}

class FixedTranslator : public TargetToPivotTranslator {
 public:
  explicit FixedTranslator(Caption c) : c_(std::move(c)) {}
  Caption translate(const Caption&) const override { return c_; }

 private:
  Caption c_;
};

double check_params(PivotCaptioner& model, const std::function<Tensor()>& loss) {
  double worst = 0.0;
  for (const auto& p : model.store().params())
    worst = std::max(worst, numeric_grad_check([&](const Tensor&) { return loss(); }, p.tensor));
  return worst;
}

}  // namespace

std::vector<GradCheckRow> run_grad_check_suite(std::uint64_t seed, double tolerance) {
  std::vector<GradCheckRow> rows;
  Rng rng(mix_seed(seed, 0x6c4ec));
  for (const auto& c : op_cases(rng)) {
    const double e = check_op(c, rng);
    rows.push_back({c.name, "op", e, e < tolerance, ""});
  }

  ToyGrammarPair grammar(SceneOntology::standard());
  CorpusSpec spec;
  spec.caption_pairs = 2;
  spec.parallel_pairs = 2;
  spec.test_pairs = 16;
  spec.seed = seed;
  const Dataset data = generate_dataset(spec, grammar);
  ModelConfig mc;
  mc.dim = 8;
  mc.heads = 2;
  mc.ff_dim = 12;
  mc.max_len = 6;
  mc.gcn_layers = 1;
  PivotCaptioner model(mc, Vocabularies::from_dataset(data), data.feature_width, seed);
  // Random weights everywhere, including the zero-initialized output heads.
  Rng init(mix_seed(seed, 0x1055));
  for (const auto& p : model.store().params()) {
    auto v = p.tensor.node()->value.data();
    for (std::size_t i = 0; i < p.tensor.numel(); ++i) v[i] = 0.5 * init.normal();
  }
  AlignmentConfig ac;
  ac.rho_m = -1.0;
  ac.rho_l = -1.0;
  ac.tau_m = 0.5;
  ac.tau_l = 0.5;
  const LabelProjectionGenerator generator(spec.features);
  // Test examples carry every field; take the first whose back-translation
  // passes produce a usable sample.
  const Example* chosen = &data.test.front();
  for (const auto& e : data.test) {
    NoGradGuard guard;
    const std::vector<const Example*> one = {&e};
    if (ipb_loss(model, one, FixedTranslator(e.pivot), grammar).used > 0 &&
        ptb_loss(model, one, generator, grammar).used > 0) {
      chosen = &e;
      break;
    }
  }
  const Example& ex = *chosen;
  const std::vector<const Example*> batch = {&ex};
  const FixedTranslator translator(ex.pivot);

  struct LossCase {
    std::string name;
    std::function<Tensor()> fn;
  };
  std::vector<LossCase> losses = {
      {"L_Cap", [&] { return model.caption_nll(ex.visual_sg, ex.pivot); }},
      {"L_Trans", [&] { return model.translation_nll(ex.language_sg, ex.pivot_tree, ex.target); }},
      {"L_CMA", [&] { return cma_loss(model, ex.visual_sg, ex.language_sg, ac).loss; }},
      {"L_CLA", [&] { return cla_loss(model, ex.pivot_tree, ex.target_tree, ac).loss; }},
      {"L_IPB", [&] { return ipb_loss(model, batch, translator, grammar).loss; }},
      {"L_PTB", [&] { return ptb_loss(model, batch, generator, grammar).loss; }},
  };
  for (const auto& l : losses) {
    std::string note;
    if (l.name == "L_IPB" || l.name == "L_PTB") {
      NoGradGuard guard;
      const auto r = l.name == "L_IPB" ? ipb_loss(model, batch, translator, grammar)
                                       : ptb_loss(model, batch, generator, grammar);
      if (r.used == 0) note = "no usable sample";
    }
    const double e = note.empty() ? check_params(model, l.fn) : 1.0;
    rows.push_back({l.name, "loss", e, note.empty() && e < tolerance, note});
  }
  return rows;
}

}  // namespace pivotcap
