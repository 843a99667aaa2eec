#include <benchmark/benchmark.h>

#include "price/stats.hpp"
#include "price/synthetic.hpp"

namespace {

void BM_StatsBuild(benchmark::State& state) {
  const auto catalog = price::generate_synthetic(
      {.name = "bench", .shape = price::SchemaShape::star, .tables = 4, .rows = static_cast<std::size_t>(state.range(0)), .seed = 1});
  std::uint64_t rows = 0;
  for (const auto& t : catalog.tables()) rows += t.row_count;
  for (auto _ : state) benchmark::DoNotOptimize(price::StatsStore::build(catalog));
  state.SetComplexityN(static_cast<std::int64_t>(rows));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}
BENCHMARK(BM_StatsBuild)->RangeMultiplier(4)->Range(1 << 12, 1 << 18)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oN);

void BM_SpaceSaving(benchmark::State& state) {
  std::vector<std::int64_t> items(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = static_cast<std::int64_t>((i * 2654435761U) % 5000);
  for (auto _ : state) {
    price::SpaceSavingSummary s;
    for (const auto item : items) s.offer(item);
    benchmark::DoNotOptimize(s.total_seen());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * items.size()));
}
BENCHMARK(BM_SpaceSaving)->Arg(1 << 16);

}  // namespace
