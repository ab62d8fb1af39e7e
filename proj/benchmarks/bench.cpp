#include <benchmark/benchmark.h>

#include "pivotcap/alignment.hpp"
#include "pivotcap/metrics.hpp"
#include "pivotcap/model.hpp"
#include "pivotcap/ops.hpp"

using namespace pivotcap;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor::from_data({r, c}, std::move(v));
}

struct Fixture {
  ToyGrammarPair grammar{SceneOntology::standard()};
  Dataset data;
  std::unique_ptr<PivotCaptioner> model;

  Fixture() {
    CorpusSpec spec;
    spec.caption_pairs = 64;
    spec.parallel_pairs = 64;
    spec.test_pairs = 16;
    data = generate_dataset(spec, grammar);
    model = std::make_unique<PivotCaptioner>(ModelConfig{}, Vocabularies::from_dataset(data), data.feature_width, 1);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(32)->Arg(64);

static void BM_ContrastiveLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor a = random_matrix(n, 32, rng), b = random_matrix(n, 32, rng);
  for (auto _ : state) {
    const Tensor s = similarity_matrix(a, b);
    benchmark::DoNotOptimize(contrastive_loss(s, select_positive_pairs(s, 0.0), 1.0, false));
  }
}
BENCHMARK(BM_ContrastiveLoss)->Arg(8)->Arg(32);

static void BM_Bleu(benchmark::State& state) {
  auto& f = fixture();
  std::vector<Tokens> cands;
  std::vector<std::vector<Tokens>> refs;
  for (const auto& e : f.data.parallel) {
    cands.push_back(e.target.tokens);
    refs.push_back({e.pivot.tokens});
  }
  for (auto _ : state) benchmark::DoNotOptimize(bleu(cands, refs));
}
BENCHMARK(BM_Bleu);

static void BM_CaptionLossBackward(benchmark::State& state) {
  auto& f = fixture();
  const auto& e = f.data.caption.front();
  for (auto _ : state) {
    f.model->store().zero_grad();
    const Tensor loss = f.model->caption_nll(e.visual_sg, e.pivot);
    backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_CaptionLossBackward);

static void BM_Predict(benchmark::State& state) {
  auto& f = fixture();
  const auto& e = f.data.test.front();
  for (auto _ : state) benchmark::DoNotOptimize(f.model->predict(e.visual_sg, f.grammar));
}
BENCHMARK(BM_Predict);
BENCHMARK_MAIN();
