#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "cityboost/kernels.hpp"
#include "cityboost/rng.hpp"

using namespace cb;

namespace {

Eigen::MatrixXd random(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1, 1);
    return m;
}

// Counters x slots of four weeks.
constexpr Eigen::Index kCounters = 50;
constexpr Eigen::Index kSlots = 4 * 672;

template <bool Parallel>
void BM_SpatialContext(benchmark::State& state) {
    kernels::set_num_threads(static_cast<int>(state.range(0)));
    Rng rng(1);
    const auto v = random(rng, kCounters, kSlots);
    const auto b = random(rng, kCounters, kCounters);
    for (auto _ : state) {
        auto w = Parallel ? kernels::spatial_context_parallel(v, b) : kernels::spatial_context_serial(v, b);
        benchmark::DoNotOptimize(w.data());
    }
    kernels::set_num_threads(0);
}

template <bool Parallel>
void BM_Project(benchmark::State& state) {
    kernels::set_num_threads(static_cast<int>(state.range(0)));
    Rng rng(2);
    const auto comps = random(rng, kCounters, 8);
    const Eigen::VectorXd mean = random(rng, kCounters, 1);
    const auto x = random(rng, kCounters, kSlots);
    for (auto _ : state) {
        auto s = Parallel ? kernels::project_parallel(comps, mean, x) : kernels::project_serial(comps, mean, x);
        benchmark::DoNotOptimize(s.data());
    }
    kernels::set_num_threads(0);
}

template <bool Parallel>
void BM_Histogram(benchmark::State& state) {
    kernels::set_num_threads(static_cast<int>(state.range(0)));
    Rng rng(3);
    const std::size_t n_rows = 60000;
    const int n_feat = 44;
    std::vector<std::vector<std::uint8_t>> bins(n_feat);
    std::vector<std::size_t> offsets{0};
    for (int f = 0; f < n_feat; ++f) {
        for (std::size_t r = 0; r < n_rows; ++r) bins[f].push_back(static_cast<std::uint8_t>(rng.below(255)));
        offsets.push_back(offsets.back() + 255);
    }
    std::vector<double> g(n_rows);
    std::vector<double> h(n_rows);
    for (std::size_t r = 0; r < n_rows; ++r) {
        g[r] = rng.uniform(-1, 1);
        h[r] = rng.uniform(0, 1);
    }
    std::vector<std::uint32_t> rows(n_rows);
    for (std::uint32_t r = 0; r < n_rows; ++r) rows[r] = r;
    std::vector<int> features(n_feat);
    for (int f = 0; f < n_feat; ++f) features[f] = f;
    const kernels::BinColumns cols{bins, offsets};
    std::vector<kernels::HistBin> out(offsets.back());
    for (auto _ : state) {
        std::fill(out.begin(), out.end(), kernels::HistBin{});
        if constexpr (Parallel) {
            kernels::histogram_parallel(cols, features, rows, g, h, out);
        } else {
            kernels::histogram_serial(cols, features, rows, g, h, out);
        }
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n_rows * n_feat));
    kernels::set_num_threads(0);
}

void thread_args(benchmark::internal::Benchmark* b) {
    for (int t : {1, 2, 4}) b->Arg(t);
}

}  // namespace

BENCHMARK(BM_SpatialContext<false>)->Arg(1)->UseRealTime();
BENCHMARK(BM_SpatialContext<true>)->Apply(thread_args)->UseRealTime();
BENCHMARK(BM_Project<false>)->Arg(1)->UseRealTime();
BENCHMARK(BM_Project<true>)->Apply(thread_args)->UseRealTime();
BENCHMARK(BM_Histogram<false>)->Arg(1)->UseRealTime();
BENCHMARK(BM_Histogram<true>)->Apply(thread_args)->UseRealTime();

BENCHMARK_MAIN();
