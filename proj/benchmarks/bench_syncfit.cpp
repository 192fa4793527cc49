#include <vector>

#include <benchmark/benchmark.h>

#include "meetsync/simdev.hpp"
#include "meetsync/syncfit.hpp"

namespace {

using namespace meetsync;

std::vector<TimeAnchor> make_anchors(std::size_t n) {
  const GroundTruthClock truth{"dev", 1.25, 42.0, 0.0005, 7};
  Rng rng(11);
  std::vector<TimeAnchor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t_auth = 5.0 + 30.0 * static_cast<double>(i);
    out.push_back({"dev", device_time(truth, t_auth, rng), t_auth, SourceTier::lsl, 1.0});
  }
  return out;
}

void BM_FitTheilSen(benchmark::State& state) {
  const auto anchors = make_anchors(static_cast<std::size_t>(state.range(0)));
  FitMethod method;
  method.kind = FitKind::theil_sen;
  for (auto _ : state) benchmark::DoNotOptimize(fit_clock_model(anchors, method));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitTheilSen)->Arg(80)->Arg(500)->Arg(2000)->Arg(10000);

void BM_FitLeastSquares(benchmark::State& state) {
  const auto anchors = make_anchors(static_cast<std::size_t>(state.range(0)));
  FitMethod method;
  method.kind = FitKind::least_squares;
  for (auto _ : state) benchmark::DoNotOptimize(fit_clock_model(anchors, method));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FitLeastSquares)->Arg(80)->Arg(10000);

}  // namespace
