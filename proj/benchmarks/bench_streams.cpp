#include <benchmark/benchmark.h>

#include "meetsync/qc.hpp"
#include "meetsync/simdev.hpp"
#include "meetsync/syncfit.hpp"

namespace {

using namespace meetsync;

const GroundTruthClock kTruth{"physio_P1", -0.8, -35.0, 0.0005, 3};

StreamDescriptor physio() {
  return {"physio_P1", "physio_P1", "P1", Modality::physio, 100.0, {"eda", "ppg"}};
}

void BM_GenerateStream(benchmark::State& state) {
  const auto desc = physio();
  const double seconds = static_cast<double>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_stream(desc, kTruth, 0.0, seconds, 99));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 100);
}
BENCHMARK(BM_GenerateStream)->Arg(60)->Arg(2400)->Unit(benchmark::kMillisecond);

void BM_FormatRawStream(benchmark::State& state) {
  const auto stream = generate_stream(physio(), kTruth, 0.0, 2400.0, 99);
  for (auto _ : state) benchmark::DoNotOptimize(format_raw_stream(stream));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(stream.samples.size()));
}
BENCHMARK(BM_FormatRawStream)->Unit(benchmark::kMillisecond);

void BM_ParseRawStream(benchmark::State& state) {
  const auto stream = generate_stream(physio(), kTruth, 0.0, 2400.0, 99);
  const auto text = format_raw_stream(stream);
  for (auto _ : state) benchmark::DoNotOptimize(parse_raw_stream(text, stream.descriptor, "bench"));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(stream.samples.size()));
}
BENCHMARK(BM_ParseRawStream)->Unit(benchmark::kMillisecond);

void BM_AlignAndScan(benchmark::State& state) {
  const auto stream = generate_stream(physio(), kTruth, 0.0, 2400.0, 99);
  ClockModel model{"physio_P1", -0.8, -35.0, 80, 0.0, SourceTier::lsl};
  for (auto _ : state) {
    const auto aligned = align_stream(stream.samples, model);
    benchmark::DoNotOptimize(detect_gaps(aligned.times, 100.0));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(stream.samples.size()));
}
BENCHMARK(BM_AlignAndScan)->Unit(benchmark::kMillisecond);

}  // namespace
