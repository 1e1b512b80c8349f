#include "causaltraj/metrics.hpp"
#include "causaltraj/model.hpp"
#include "causaltraj/training.hpp"

#include <benchmark/benchmark.h>

using namespace causaltraj;

namespace {

// Default-sized model on one generated scene.
struct Fixture {
  Config cfg;
  std::vector<Scene> scenes;
  std::unique_ptr<CausalTrajModel> model;

  explicit Fixture(Variant v) {
    cfg.model.variant = v;
    scenes = generate_split(cfg.generator, cfg.generator.rho, 8, 11, "bench");
    model = std::make_unique<CausalTrajModel>(cfg.model, 3);
  }
};

void BM_Forward(benchmark::State& st) {
  Fixture f(static_cast<Variant>(st.range(0)));
  std::uint64_t seed = 0;
  for (auto _ : st) {
    ag::NoGradGuard ng;
    benchmark::DoNotOptimize(f.model->forward(f.scenes[seed % f.scenes.size()], nullptr, seed).prediction);
    ++seed;
  }
}
BENCHMARK(BM_Forward)->Arg(static_cast<int>(Variant::D))->Arg(static_cast<int>(Variant::E))->Unit(benchmark::kMillisecond);

void BM_SpatialTokens(benchmark::State& st) {
  Fixture f(Variant::E);
  for (auto _ : st) benchmark::DoNotOptimize(f.model->spatial_tokens(f.scenes[0]));
}
BENCHMARK(BM_SpatialTokens)->Unit(benchmark::kMicrosecond);

void BM_SampleBackdoor(benchmark::State& st) {
  Fixture f(Variant::E);
  std::uint64_t seed = 0;
  for (auto _ : st) benchmark::DoNotOptimize(f.model->sample_backdoor(f.scenes[0], seed++));
}
BENCHMARK(BM_SampleBackdoor)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& st) {
  Fixture f(Variant::E);
  const Scene& s = f.scenes[0];
  const BackdoorSet set = f.model->sample_backdoor(s, 1);
  nn::ParamStore loss_store(0);
  const LossWeights w(loss_store, f.cfg.train);
  for (auto _ : st) {
    f.model->params().zero_grad();
    const SceneLoss loss = scene_loss(*f.model, w, f.cfg.train, s, &set, 0);
    ag::backward(loss.total);
    benchmark::DoNotOptimize(loss.total.value()(0, 0));
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_MinAdeK(benchmark::State& st) {
  const int k = static_cast<int>(st.range(0));
  Rng rng(5);
  std::vector<Matrix> modes;
  for (int i = 0; i < 6; ++i) modes.push_back(standard_normal(30, 2, rng));
  Eigen::VectorXd probs = Eigen::VectorXd::Constant(6, 1.0 / 6.0);
  const Matrix gt = standard_normal(30, 2, rng);
  for (auto _ : st) benchmark::DoNotOptimize(min_ade_k(modes, probs, gt, k));
}
BENCHMARK(BM_MinAdeK)->Arg(1)->Arg(3)->Arg(6);

}  // namespace

BENCHMARK_MAIN();
