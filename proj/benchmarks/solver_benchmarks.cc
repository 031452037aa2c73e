#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "instavo/pipeline.h"
#include "instavo/relpose.h"
#include "instavo/synthlab.h"
#include "instavo/transmag.h"

namespace instavo {
namespace {

struct Fixture {
  Scene scene;
  SyntheticPairs obs;
  Rotation truth;
  Rotation guess;
  UnitDirection u0;

  explicit Fixture(double outlier_rate = 0.0) : scene(GenerateScene(SceneConfig{})) {
    constexpr int kFrame = 20;
    obs = SynthObservations(scene, kFrame, scene.config.pixel_sigma, outlier_rate, 7);
    truth = scene.poses[kFrame].rotation;
    guess = PerturbedGuess(truth, {0.3});
    u0 = TranslationFromRotation(EpipolarNormalCovariance(guess, obs.pairs)).direction;
  }
};

void BM_BuildDataMatrix(benchmark::State& state) {
  const Fixture f;
  for (auto _ : state) benchmark::DoNotOptimize(BuildDataMatrix(f.obs.pairs));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(f.obs.pairs.size()));
}
BENCHMARK(BM_BuildDataMatrix);

void BM_ResidualVector(benchmark::State& state) {
  const Fixture f;
  const DataMatrix c = BuildDataMatrix(f.obs.pairs);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ResidualVector(c, f.guess, f.u0, SolverWeights{}));
  }
}
BENCHMARK(BM_ResidualVector);

void BM_RefineRelativePose(benchmark::State& state) {
  const Fixture f;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        RefineRelativePose(f.obs.pairs, f.guess, f.u0, SolverWeights{}, LMConfig{}));
  }
}
BENCHMARK(BM_RefineRelativePose);

void BM_RansacRelativePose(benchmark::State& state) {
  const Fixture f(0.3);
  for (auto _ : state) {
    std::mt19937_64 rng(11);
    benchmark::DoNotOptimize(RansacRelativePose(f.obs.pairs, f.guess, SolverWeights{},
                                                RansacConfig{}, LMConfig{}, rng));
  }
}
BENCHMARK(BM_RansacRelativePose);

void BM_EstimateMagnitude(benchmark::State& state) {
  const Fixture f;
  const Pose& pose = f.scene.poses[20];
  const UnitDirection u = UnitDirection::FromVector(pose.translation);
  std::vector<DepthFeature> features;
  for (std::size_t i = 0; i < f.obs.pairs.size(); ++i) {
    features.push_back({f.obs.pairs[i].f, f.obs.pairs[i].f_prime, f.obs.depths[i], 1.0});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(EstimateMagnitude(features, pose.rotation, u, 0.5,
                                               f.scene.config.camera, RobustCost{}, LMConfig{}));
  }
}
BENCHMARK(BM_EstimateMagnitude);

void BM_VisualOdometrySequence(benchmark::State& state) {
  const Scene scene = GenerateScene(SceneConfig{});
  for (auto _ : state) {
    VoConfig cfg;
    cfg.camera = scene.config.camera;
    VisualOdometry vo(cfg);
    SceneObservationProvider provider(scene, scene.config.pixel_sigma, 3);
    while (auto frame = provider.Next()) benchmark::DoNotOptimize(vo.ProcessFrame(*frame));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(scene.poses.size()));
}
BENCHMARK(BM_VisualOdometrySequence)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace instavo

BENCHMARK_MAIN();
