#include <benchmark/benchmark.h>

#include "vpe/shape_formation.hpp"
#include "vpe/spectral.hpp"
#include "vpe/swarm_model.hpp"
#include "vpe/vpe_core.hpp"

namespace {

vpe::SwarmScenario square(double size_factor) {
  return vpe::generate_scenario(vpe::ScenarioKind::Square, size_factor, 1.0, 7);
}

void BM_BuildGamma(benchmark::State& state) {
  const auto pos = vpe::generate_positions(vpe::ScenarioKind::Square,
                                           static_cast<double>(state.range(0)), 1.0, 7);
  std::vector<vpe::RobotPose> poses;
  for (std::size_t i = 0; i < pos.size(); ++i) poses.push_back({static_cast<int>(i), pos[i]});
  for (auto _ : state) benchmark::DoNotOptimize(vpe::build_gamma(poses, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(pos.size()));
}
BENCHMARK(BM_BuildGamma)->Arg(10)->Arg(30)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_VpeStep(benchmark::State& state) {
  const auto sc = square(static_cast<double>(state.range(0)));
  vpe::VpeParams p;
  const vpe::TransferOperator tp(vpe::transition_probabilities(sc, p, +1));
  const vpe::TransferOperator tm(vpe::transition_probabilities(sc, p, -1));
  auto s = vpe::VpeState::uniform(sc.size());
  for (auto _ : state) {
    s = vpe::vpe_step(s, tp, tm);
    benchmark::DoNotOptimize(s.xi_plus.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(sc.size()));
}
BENCHMARK(BM_VpeStep)->Arg(10)->Arg(30)->Arg(100);

void BM_PerronOracle(benchmark::State& state) {
  const auto sc = square(static_cast<double>(state.range(0)));
  vpe::VpeParams p;
  const auto t = vpe::build_transition_matrix(vpe::transition_probabilities(sc, p, +1), +1);
  vpe::OracleOptions opt;
  opt.compute_lambda2 = false;
  for (auto _ : state)
    benchmark::DoNotOptimize(vpe::perron_oracle(t, static_cast<double>(sc.size()), sc.r0(), p.k, opt));
}
BENCHMARK(BM_PerronOracle)->Arg(10)->Arg(30)->Unit(benchmark::kMillisecond);

void BM_Similarity(benchmark::State& state) {
  const auto shape = vpe::TargetShape::triangle(1.8);
  std::vector<vpe::Vec2> pts;
  for (int i = 0; i < 52; ++i) pts.push_back({0.2 * (i % 13) - 1.2, 0.2 * (i / 13) - 0.3});
  for (auto _ : state) benchmark::DoNotOptimize(vpe::similarity(pts, shape));
}
BENCHMARK(BM_Similarity)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
