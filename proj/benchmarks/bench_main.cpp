#include <memory>
#include <random>

#include <benchmark/benchmark.h>

#include "boostdepth/metrics.hpp"
#include "boostdepth/optimizer.hpp"
#include "boostdepth/photometric.hpp"
#include "boostdepth/synth_world.hpp"

using namespace boostdepth;

namespace {

std::shared_ptr<const Sequence> bench_scene() {
  static const auto seq = [] {
    SceneSpec spec;
    spec.layout = Layout::two_plane_step;
    spec.supersample = 1;
    return std::make_shared<const Sequence>(render(spec));
  }();
  return seq;
}

void BM_Synthesize(benchmark::State& state) {
  const auto seq = bench_scene();
  const int t = seq->spec.reference_frame();
  const RigidTransform pose = seq->relative_pose(t, t + 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(synthesize(seq->frames[t].depth, seq->frames[t + 2].image, pose, seq->intrinsics));
  }
}
BENCHMARK(BM_Synthesize);

void BM_PhotometricError(benchmark::State& state) {
  const auto seq = bench_scene();
  const LossConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(photometric_error(seq->frames[7].image, seq->frames[8].image, cfg));
  }
}
BENCHMARK(BM_PhotometricError);

void BM_EvaluateLoss(benchmark::State& state) {
  const auto seq = bench_scene();
  const FrameWindow window(seq, seq->spec.reference_frame());
  const PoseEstimator est = PoseEstimator::for_sequence(*seq, EstimatorKind::oracle);
  RunConfig cfg;
  const int epoch = static_cast<int>(state.range(0));
  const Stage stage = epoch < 10 ? Stage::warmup : Stage::boost;
  const EpochSources src = sources_for_epoch(window, est, cfg, epoch, stage);
  const StepSettings settings = settings_for_epoch(cfg, LossConfig{}, epoch, stage);
  const OptimizerState st = OptimizerState::constant(seq->intrinsics.width, seq->intrinsics.height, 4, 2.8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_loss(st, window, src.selection.sources, est, settings));
  }
}
BENCHMARK(BM_EvaluateLoss)->Arg(0)->Arg(15);

void BM_DistanceTransform(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::bernoulli_distribution on(0.01);
  Mask m(n, n, 1, 0);
  for (auto& v : m.data()) v = on(rng);
  for (auto _ : state) benchmark::DoNotOptimize(distance_transform(m));
}
BENCHMARK(BM_DistanceTransform)->Arg(128)->Arg(512);

void BM_NearestDistances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Eigen::Vector3d> a(n);
  std::vector<Eigen::Vector3d> b(n);
  for (auto& p : a) p = {u(rng), u(rng), u(rng)};
  for (auto& p : b) p = {u(rng), u(rng), u(rng)};
  for (auto _ : state) benchmark::DoNotOptimize(nearest_distances(a, b, 0.1));
}
BENCHMARK(BM_NearestDistances)->Arg(2000)->Arg(20000);

}  // namespace

BENCHMARK_MAIN();
