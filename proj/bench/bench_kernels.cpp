// Serial reference kernels against their OpenMP counterparts.
//
//   ./bench_kernels --benchmark_filter=NnAssign
//
// Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include "kpreg/losses.hpp"
#include "kpreg/parallel.hpp"
#include "kpreg/synth.hpp"

namespace {

kpreg::PointSet random_points(std::size_t n, std::uint64_t seed) {
    kpreg::Rng rng(seed);
    kpreg::PointSet pts(n);
    for (auto &p : pts) p = {rng.uniform(), rng.uniform()};
    return pts;
}

void BM_NnAssignSerial(benchmark::State &state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const kpreg::PointSet q = random_points(n, 1), r = random_points(n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(kpreg::nn_assign(q, r));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

void BM_NnAssignParallel(benchmark::State &state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const kpreg::PointSet q = random_points(n, 1), r = random_points(n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(kpreg::nn_assign_parallel(q, r));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
    state.counters["threads"] = kpreg::max_threads();
}

void register_batch_bench(benchmark::State &state, kpreg::Execution exec) {
    const auto pairs = static_cast<std::size_t>(state.range(0));
    const auto batch = kpreg::generate_batch(kpreg::regime_config(kpreg::Regime::easy, 3), pairs);
    const kpreg::LossSpec spec{kpreg::LossFamily::nn_cyc, kpreg::Direction::symmetric};
    kpreg::OptimizerConfig cfg;
    cfg.rotation_starts = 4;
    for (auto _ : state) benchmark::DoNotOptimize(kpreg::register_batch(batch, spec, cfg, exec));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pairs));
    state.counters["threads"] = exec == kpreg::Execution::parallel ? kpreg::max_threads() : 1;
}

void BM_RegisterBatchSerial(benchmark::State &state) { register_batch_bench(state, kpreg::Execution::serial); }
void BM_RegisterBatchParallel(benchmark::State &state) { register_batch_bench(state, kpreg::Execution::parallel); }

} // namespace

BENCHMARK(BM_NnAssignSerial)->RangeMultiplier(4)->Range(16, 4096);
BENCHMARK(BM_NnAssignParallel)->RangeMultiplier(4)->Range(16, 4096);
BENCHMARK(BM_RegisterBatchSerial)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RegisterBatchParallel)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
