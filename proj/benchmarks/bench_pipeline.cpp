#include <benchmark/benchmark.h>

#include "kcflat/pipeline.hpp"
#include "kcflat/segmentation.hpp"
#include "kcflat/synth.hpp"

using namespace kcflat;

namespace {

void BM_SegmentGarment(benchmark::State& state) {
    const int res = static_cast<int>(state.range(0));
    const auto raster = synth::rasterize(synth::generate_instance(GarmentCategory::tshirt, 1), res);
    for (auto _ : state) benchmark::DoNotOptimize(segment_garment(raster.mask));
}
BENCHMARK(BM_SegmentGarment)->Arg(64)->Arg(256);

void BM_RenderHang(benchmark::State& state) {
    const int res = static_cast<int>(state.range(0));
    const auto s = synth::generate_instance(GarmentCategory::shirt, 4);
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(synth::render_hang(s, 5, res, 3.0, ++seed));
}
BENCHMARK(BM_RenderHang)->Arg(64)->Arg(256);

void BM_PlanCsvRoundTrip(benchmark::State& state) {
    const auto plan = generate_flatten_template(GarmentCategory::towel, 0, nominal_geometry(GarmentCategory::towel, 0),
                                                Workspace{});
    for (auto _ : state) benchmark::DoNotOptimize(parse_plan_csv_text(plan_to_csv(plan), plan.plan_id));
}
BENCHMARK(BM_PlanCsvRoundTrip);

void BM_ExecuteTemplate(benchmark::State& state) {
    const Workspace ws;
    const auto plan = generate_flatten_template(GarmentCategory::towel, 0, nominal_geometry(GarmentCategory::towel, 0), ws);
    const auto start = initial_state(ws);
    for (auto _ : state) benchmark::DoNotOptimize(execute_plan(plan, ws, start));
}
BENCHMARK(BM_ExecuteTemplate);

// Recognition through execution for one 64x64 capture.
void BM_RunPipeline(benchmark::State& state) {
    KCNetConfig cfg;
    cfg.base_width = 16;
    cfg.input_resolution = 64;
    KCNet<float> net(cfg);
    net.initialize(0);
    const Workspace ws;
    const PlanRegistry reg = build_template_registry(ws);
    const Capture c = synth::render_hang(synth::generate_instance(GarmentCategory::towel, 2), 3, 64, 3.0, 1).capture;
    for (auto _ : state) benchmark::DoNotOptimize(run_pipeline(c, net, Normalization{}, reg, ws));
}
BENCHMARK(BM_RunPipeline)->Unit(benchmark::kMillisecond);

}  // namespace
