#include <benchmark/benchmark.h>

#include "support/synthetic_session.hpp"
#include "wsic/corrector.hpp"
#include "wsic/uncertainty.hpp"

using namespace wsic;

namespace {

// 64 x 64 = 4096 patches with 32-D latent features.
struct Slide {
    PatchGrid grid = testing::full_grid(1040, 1040);
    std::vector<int> truth;
    std::vector<McRecord> records = testing::toy_records(grid, truth, 21, 0.7, 0.4, 32);
    SessionOptions options = [] {
        SessionOptions o;
        o.seed = 1;
        o.calibration = Calibration{0.0, 1.0};
        return o;
    }();
};

const Slide& slide() {
    static const Slide s;
    return s;
}

void BM_InitSession(benchmark::State& state) {
    const Slide& s = slide();
    for (auto _ : state) benchmark::DoNotOptimize(init_session(s.grid, s.records, s.options));
    state.counters["patches"] = static_cast<double>(s.grid.size());
}
BENCHMARK(BM_InitSession)->Unit(benchmark::kMillisecond);

void BM_CorrectionPass(benchmark::State& state) {
    const Slide& s = slide();
    const CorrectionSession base = init_session(s.grid, s.records, s.options);
    Correction fp{ScribbleKind::CorrectiveFp, {}}, fn{ScribbleKind::CorrectiveFn, {}};
    for (int i = 0; i < 10; ++i) {
        fp.patch_ids.push_back(64 * 40 + i);
        fn.patch_ids.push_back(64 * 10 + 50 + i);
    }
    const CorrectionPolicy policy{PolicyMode::Naive, static_cast<int>(state.range(0)), 4};
    for (auto _ : state) {
        state.PauseTiming();
        CorrectionSession work = base;
        state.ResumeTiming();
        benchmark::DoNotOptimize(apply_correction(work, {fp, fn}, policy));
    }
}
BENCHMARK(BM_CorrectionPass)->Arg(1)->Arg(30)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_WsiUncertainty(benchmark::State& state) {
    const Slide& s = slide();
    for (auto _ : state) benchmark::DoNotOptimize(wsi_uncertainty(s.records, 0.33));
}
BENCHMARK(BM_WsiUncertainty)->Unit(benchmark::kMicrosecond);

} // namespace
BENCHMARK_MAIN();
