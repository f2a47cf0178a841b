#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ndsim/engine.hpp"
#include "ndsim/graph.hpp"
#include "ndsim/ndp.hpp"
#include "ndsim/reorder.hpp"
#include "ndsim/vecdata.hpp"

namespace {

using namespace ndsim;

VectorSet gaussian(std::size_t n, std::size_t dim, std::uint64_t seed) {
  GaussianMixtureSpec spec;
  spec.count = n;
  spec.dim = dim;
  spec.seed = seed;
  return make_gaussian_mixture(spec);
}

void BM_Distance(benchmark::State& state) {
  const VectorSet v = gaussian(2, static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(distance(DistanceKind::SquaredL2, v.row(0), v.row(1)));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Distance)->Arg(96)->Arg(128)->Arg(960);

struct SearchFixture {
  VectorSet base = gaussian(20000, 96, 3);
  VectorSet queries = gaussian(256, 96, 4);
  Graph graph = build_graph(base, 16, 48, 5);
};

const SearchFixture& fixture() {
  static const SearchFixture f;
  return f;
}

void BM_BeamSearch(benchmark::State& state) {
  const auto& f = fixture();
  SearchParams p;
  p.ef = static_cast<std::uint32_t>(state.range(0));
  std::size_t q = 0;
  for (auto _ : state) {
    p.entry = static_cast<VertexId>(q * 7919 % f.base.count());
    benchmark::DoNotOptimize(beam_search(f.graph, f.base, f.queries.row(q % 256), p, q));
    ++q;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_BeamSearch)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_DegreeAscendingBfs(benchmark::State& state) {
  const Graph g = make_small_world(static_cast<std::size_t>(state.range(0)), 10, 0.1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(degree_ascending_bfs(g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DegreeAscendingBfs)->Arg(16384)->Arg(131072)->Unit(benchmark::kMillisecond);

void BM_RunBatch(benchmark::State& state) {
  const auto& f = fixture();
  const Layout layout = make_layout(f.graph, f.base.record_bytes(), SsdGeometry::standard(), true,
                                    PlacementMode::MultiPlane);
  const std::vector<VertexId> entries = random_entries(f.queries.count(), f.base.count(), 9);
  NdpConfig cfg;
  cfg.speculation = state.range(0) != 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_batch(layout, f.base, f.queries, entries, cfg));
  }
  state.SetItemsProcessed(state.iterations() * f.queries.count());
}
BENCHMARK(BM_RunBatch)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
