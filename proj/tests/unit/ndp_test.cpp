#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "ndsim/error.hpp"
#include "ndsim/ndp.hpp"
#include "test_support.hpp"

namespace ndsim {
namespace {

using testing::brute_force_knn;
using testing::random_vectors;
using testing::tiny_geometry;

// tiny_geometry with 2 slots per page: vertex v sits on LUN (v / 4) % 8,
// plane (v / 2) % 2, page index v / 32.
Luncsr edgeless(std::size_t n) {
  std::vector<std::vector<VertexId>> adj(n);
  return Luncsr::build(Graph::from_adjacency(adj, 1), map_to_physical(n, tiny_geometry(), 2));
}

std::set<std::uint32_t> queries_on(const LunWork& lw) {
  std::set<std::uint32_t> out;
  for (const auto& item : lw.items) out.insert(item.query);
  return out;
}

TEST(AllocateBatch, GroupsQueriesByLun) {
  Luncsr l = edgeless(64);
  ASSERT_EQ(l.lun_of(4), 1u);
  ASSERT_EQ(l.lun_of(8), 2u);
  ASSERT_EQ(l.lun_of(12), 3u);
  const std::vector<QueryWork> work = {{1, {4, 12}}, {2, {5, 8}}, {3, {9, 13}}};
  LunWorklist wl = allocate_batch(work, l);
  ASSERT_EQ(wl.size(), 3u);
  EXPECT_EQ(wl[0].lun, 1u);
  EXPECT_EQ(queries_on(wl[0]), (std::set<std::uint32_t>{1, 2}));
  EXPECT_EQ(queries_on(wl[1]), (std::set<std::uint32_t>{2, 3}));
  EXPECT_EQ(queries_on(wl[2]), (std::set<std::uint32_t>{1, 3}));
}

TEST(AllocateBatch, SingleLun) {
  Luncsr l = edgeless(64);
  const std::vector<QueryWork> work = {{0, {4, 5, 6, 7}}};
  LunWorklist wl = allocate_batch(work, l);
  ASSERT_EQ(wl.size(), 1u);
  EXPECT_EQ(wl[0].items.size(), 4u);
}

TEST(PlanCommands, BothPlanesOnePageIsOneCommand) {
  Luncsr l = edgeless(64);
  const std::vector<QueryWork> work = {{0, {4, 5, 6, 7}}};
  auto planned = plan_commands(work, l, true, DistanceKind::SquaredL2);
  ASSERT_EQ(planned.size(), 1u);
  EXPECT_EQ(planned[0].cmd.planes.size(), 2u);
  EXPECT_EQ(validate_multiplane(planned[0].cmd), MultiplaneViolation::None);
}

TEST(PlanCommands, DifferentPagesSerialize) {
  Luncsr l = edgeless(64);
  ASSERT_EQ(l.lun_of(36), l.lun_of(4));
  ASSERT_NE(l.physical_address(36).page, l.physical_address(4).page);
  const std::vector<QueryWork> work = {{0, {4, 36}}};
  EXPECT_EQ(plan_commands(work, l, true, DistanceKind::SquaredL2).size(), 2u);
}

TEST(PlanCommands, SharedPageReadOnceInBatchMode) {
  Luncsr l = edgeless(64);
  const std::vector<QueryWork> work = {{0, {4, 5}}, {1, {4, 5}}};
  auto batch = plan_commands(work, l, true, DistanceKind::SquaredL2);
  auto single = plan_commands(work, l, false, DistanceKind::SquaredL2);
  ASSERT_EQ(batch.size(), 1u);
  EXPECT_TRUE(batch[0].cmd.page_loc_bit);
  EXPECT_EQ(batch[0].cmd.planes[0].candidates, 4u);
  EXPECT_EQ(single.size(), 2u);

  auto reads = [](const std::vector<PlannedCommand>& cmds) {
    SsdSim sim(tiny_geometry(), TimingConfig{}, SimOptions{});
    for (const auto& pc : cmds) {
      // Something else lands in the buffer between two queries of a no-grouping run.
      sim.invalidate_latch(pc.cmd.lun, pc.cmd.planes[0].plane);
      sim.submit(pc.cmd, sim.now());
      sim.drain_normal();
    }
    return sim.counters().page_reads;
  };
  EXPECT_LT(reads(batch), reads(single));
}

TEST(PlanCommands, EveryCommandIsLegalAndCoversWork) {
  Luncsr l = edgeless(700);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<VertexId> vid(0, 699);
  for (int round = 0; round < 50; ++round) {
    std::vector<QueryWork> work(8);
    std::multiset<std::pair<std::uint32_t, VertexId>> want;
    for (std::uint32_t q = 0; q < work.size(); ++q) {
      work[q].query = q;
      std::set<VertexId> vs;
      while (vs.size() < 12) vs.insert(vid(rng));
      work[q].vertices.assign(vs.begin(), vs.end());
      for (VertexId v : vs) want.insert({q, v});
    }
    for (bool batch : {true, false}) {
      std::multiset<std::pair<std::uint32_t, VertexId>> got;
      for (const auto& pc : plan_commands(work, l, batch, DistanceKind::SquaredL2)) {
        EXPECT_EQ(validate_multiplane(pc.cmd), MultiplaneViolation::None);
        ASSERT_EQ(pc.items.size(), pc.cmd.planes.size());
        for (std::size_t p = 0; p < pc.items.size(); ++p) {
          EXPECT_EQ(pc.cmd.planes[p].candidates, pc.items[p].size());
          for (const auto& it : pc.items[p]) {
            const PhysicalAddress a = l.physical_address(it.vertex);
            EXPECT_EQ(l.lun_of(it.vertex), pc.cmd.lun);
            EXPECT_EQ(a.plane, pc.cmd.planes[p].plane);
            EXPECT_EQ(a.page, pc.cmd.planes[p].page);
            EXPECT_EQ(a.block, pc.cmd.planes[p].block);
            got.insert({it.query, it.vertex});
          }
        }
      }
      EXPECT_EQ(got, want);
    }
  }
}

Graph edges_to_graph(std::size_t n, const std::vector<std::pair<VertexId, VertexId>>& edges) {
  std::vector<std::vector<VertexId>> adj(n);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::uint32_t r = 1;
  for (auto& l : adj) r = std::max<std::uint32_t>(r, static_cast<std::uint32_t>(l.size()));
  return Graph::from_adjacency(adj, r);
}

TEST(SecondOrder, TriangleIsEmpty) {
  Graph g = edges_to_graph(3, {{0, 1}, {1, 2}, {0, 2}});
  EXPECT_TRUE(second_order_preference(g, 0, 10).empty());
}

TEST(SecondOrder, Path) {
  Graph g = edges_to_graph(4, {{0, 1}, {1, 2}, {2, 3}});
  EXPECT_EQ(second_order_preference(g, 0, 10), (std::vector<Preference>{{2, 1}}));
}

TEST(SecondOrder, MatchesBruteForceOnStarOfCliques) {
  // Hub 0 joins one vertex of each 4-clique; clique members also link across cliques.
  std::vector<std::pair<VertexId, VertexId>> edges;
  const std::uint32_t cliques = 5;
  for (std::uint32_t c = 0; c < cliques; ++c) {
    const VertexId base = 1 + 4 * c;
    for (VertexId i = 0; i < 4; ++i)
      for (VertexId j = i + 1; j < 4; ++j) edges.emplace_back(base + i, base + j);
    edges.emplace_back(0, base);
    if (c > 0) edges.emplace_back(base + 1, base - 2);
  }
  edges.emplace_back(1, 6);
  Graph g = edges_to_graph(1 + 4 * cliques, edges);
  for (VertexId entry = 0; entry < g.size(); ++entry) {
    const auto first = g.neighbors(entry);
    std::map<VertexId, std::uint32_t> score;
    for (VertexId f : first) {
      for (VertexId s : g.neighbors(f)) {
        if (s == entry || std::find(first.begin(), first.end(), s) != first.end()) continue;
        ++score[s];
      }
    }
    std::vector<Preference> want;
    for (auto [v, sc] : score) want.push_back({v, sc});
    std::sort(want.begin(), want.end(), [](const Preference& a, const Preference& b) {
      return a.score > b.score || (a.score == b.score && a.vertex < b.vertex);
    });
    for (std::uint32_t limit : {1u, 3u, 100u}) {
      auto cut = want;
      if (cut.size() > limit) cut.resize(limit);
      EXPECT_EQ(second_order_preference(g, entry, limit), cut) << entry << " " << limit;
    }
  }
}

TEST(MergeSpeculation, EmptyAndFullIntersection) {
  std::vector<VertexId> pending{1, 2, 3};
  std::vector<Neighbor> reused;
  EXPECT_EQ(merge_speculation(pending, {{7, 0.5f}}, reused), 0u);
  EXPECT_EQ(pending.size(), 3u);
  EXPECT_EQ(merge_speculation(pending, {{1, 1.0f}, {2, 2.0f}, {3, 3.0f}}, reused), 3u);
  EXPECT_TRUE(pending.empty());
  EXPECT_EQ(reused, (std::vector<Neighbor>{{1, 1.0f}, {2, 2.0f}, {3, 3.0f}}));
}

std::vector<Neighbor> list_of(std::initializer_list<float> ds) {
  std::vector<Neighbor> out;
  VertexId id = 0;
  for (float d : ds) out.push_back({id++, d});
  return out;
}

TEST(Bitonic, WorkedValues) {
  auto top = bitonic_topk(list_of({5, 1, 4, 2}), 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].distance, 1.0f);
  EXPECT_EQ(top[1].distance, 2.0f);
  auto sorted = list_of({1, 2, 3, 4, 5});
  EXPECT_EQ(bitonic_topk(sorted, 3), std::vector<Neighbor>(sorted.begin(), sorted.begin() + 3));
  EXPECT_THROW(bitonic_topk(sorted, 0), Error);
  EXPECT_EQ(padded_length(5), 8u);
  EXPECT_EQ(padded_length(8), 8u);
  EXPECT_EQ(padded_length(1), 1u);
}

TEST(Bitonic, MatchesComparisonSort) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<std::size_t> len(0, 70);
  std::uniform_int_distribution<int> dist(0, 20);  // frequent ties
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<Neighbor> list(len(rng));
    for (std::size_t i = 0; i < list.size(); ++i) {
      list[i] = {static_cast<VertexId>(rng() % 1000), static_cast<float>(dist(rng))};
    }
    auto want = list;
    std::sort(want.begin(), want.end(), closer);
    ASSERT_EQ(bitonic_sort(list), want);
  }
}

TEST(QueryState, TerminatesWhenCandidatesAreFarther) {
  // Entry 0 at distance 0 fills a result list of capacity 1; its neighbor is farther.
  QueryState s(3, 1, 0);
  s.start(0);
  auto neighbors = [](VertexId v, std::vector<VertexId>& out) {
    out = v == 0 ? std::vector<VertexId>{1} : std::vector<VertexId>{0};
  };
  s.gather({{0, 0.0f}}, neighbors);
  EXPECT_TRUE(s.active());
  EXPECT_EQ(s.expanded(), VertexId{0});
  EXPECT_EQ(s.pending(), std::vector<VertexId>{1});
  s.gather({{1, 5.0f}}, neighbors);
  EXPECT_FALSE(s.active());
  EXPECT_EQ(s.results(), (std::vector<Neighbor>{{0, 0.0f}}));
}

TEST(QueryState, NearestCandidateIsNextEntry) {
  QueryState s(4, 1, 0);
  s.start(3);
  auto neighbors = [](VertexId v, std::vector<VertexId>& out) {
    out = v == 3 ? std::vector<VertexId>{1, 2} : std::vector<VertexId>{0};
  };
  s.gather({{3, 4.0f}}, neighbors);
  s.gather({{1, 2.0f}, {2, 0.0f}}, neighbors);
  EXPECT_EQ(s.expanded(), VertexId{2});
}

struct Fixture {
  VectorSet base;
  VectorSet queries;
  Graph graph;
  std::vector<VertexId> entries;
};

Fixture fixture(std::size_t n, std::size_t q, std::uint64_t seed) {
  Fixture f;
  f.base = random_vectors(n, 8, seed);
  f.queries = random_vectors(q, 8, seed + 1000);
  f.graph = build_graph(f.base, 8, 16, seed);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < q; ++i) f.entries.push_back(static_cast<VertexId>(rng() % n));
  return f;
}

NdpConfig ndp_config(bool da, bool sp, AccelLevel level = AccelLevel::Lun) {
  NdpConfig c;
  c.ef = 24;
  c.k = 5;
  c.dynamic_allocation = da;
  c.speculation = sp;
  c.level = level;
  return c;
}

TEST(RunBatch, SingleQueryMatchesBeamSearch) {
  Fixture f = fixture(500, 1, 1);
  Layout layout = make_layout(f.graph, f.base.record_bytes(), tiny_geometry(), false,
                              PlacementMode::MultiPlane);
  BatchResult r = run_batch(layout, f.base, f.queries, f.entries, ndp_config(false, false));
  SearchParams p;
  p.ef = 24;
  p.k = 5;
  p.entry = f.entries[0];
  auto ref = beam_search(f.graph, f.base, f.queries.row(0), p, 0);
  ASSERT_EQ(r.queries.size(), 1u);
  EXPECT_EQ(r.queries[0].topk, ref.topk);
  EXPECT_EQ(r.queries[0].trace, ref.trace);
  EXPECT_GT(r.makespan_us, 0.0);
}

TEST(RunBatch, TransparentAcrossEveryConfiguration) {
  Fixture f = fixture(600, 40, 2);
  std::vector<std::vector<Neighbor>> reference;
  for (std::size_t i = 0; i < f.queries.count(); ++i) {
    SearchParams p;
    p.ef = 24;
    p.k = 5;
    p.entry = f.entries[i];
    reference.push_back(beam_search(f.graph, f.base, f.queries.row(i), p, i).topk);
  }
  for (bool re : {false, true}) {
    for (PlacementMode mode : {PlacementMode::MultiPlane, PlacementMode::Striped}) {
      Layout layout = make_layout(f.graph, f.base.record_bytes(), tiny_geometry(), re, mode);
      for (bool da : {false, true}) {
        for (bool sp : {false, true}) {
          for (auto level : {AccelLevel::Lun, AccelLevel::Chip, AccelLevel::Channel, AccelLevel::Host}) {
            BatchResult r = run_batch(layout, f.base, f.queries, f.entries, ndp_config(da, sp, level));
            for (std::size_t i = 0; i < r.queries.size(); ++i) {
              ASSERT_EQ(r.queries[i].topk, reference[i])
                  << "re " << re << " da " << da << " sp " << sp << " level " << to_string(level);
            }
          }
        }
      }
    }
  }
}

TEST(RunBatch, DynamicAllocationNeverReadsMore) {
  for (std::uint64_t seed = 3; seed < 6; ++seed) {
    Fixture f = fixture(800, 64, seed);
    Layout layout = make_layout(f.graph, f.base.record_bytes(), tiny_geometry(), true,
                                PlacementMode::MultiPlane);
    auto off = run_batch(layout, f.base, f.queries, f.entries, ndp_config(false, false));
    auto on = run_batch(layout, f.base, f.queries, f.entries, ndp_config(true, false));
    EXPECT_LE(on.counters.sim.page_reads, off.counters.sim.page_reads);
  }
}

TEST(RunBatch, SpeculationAddsAccessesAndReusesExactDistances) {
  Fixture f = fixture(800, 64, 7);
  Layout layout = make_layout(f.graph, f.base.record_bytes(), tiny_geometry(), true,
                              PlacementMode::MultiPlane);
  auto off = run_batch(layout, f.base, f.queries, f.entries, ndp_config(true, false));
  auto on = run_batch(layout, f.base, f.queries, f.entries, ndp_config(true, true));
  EXPECT_GT(on.counters.speculated, 0u);
  EXPECT_GE(on.counters.sim.page_accesses, off.counters.sim.page_accesses);
  for (std::size_t i = 0; i < on.queries.size(); ++i) {
    EXPECT_EQ(on.queries[i].topk, off.queries[i].topk);
    EXPECT_EQ(on.queries[i].trace, off.queries[i].trace);
  }
}

TEST(RunBatch, SplitsIntoPasses) {
  Fixture f = fixture(300, 10, 8);
  Layout layout = make_layout(f.graph, f.base.record_bytes(), tiny_geometry(), false,
                              PlacementMode::MultiPlane);
  NdpConfig c = ndp_config(true, false);
  c.max_batch_per_pass = 4;
  auto split = run_batch(layout, f.base, f.queries, f.entries, c);
  EXPECT_EQ(split.counters.passes, 3u);
  EXPECT_EQ(split.queries[9].pass, 2u);
  c.max_batch_per_pass = 2048;
  auto whole = run_batch(layout, f.base, f.queries, f.entries, c);
  EXPECT_EQ(whole.counters.passes, 1u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(split.queries[i].topk, whole.queries[i].topk);
}

TEST(RunBatch, FaultedEntryIsReported) {
  Fixture f = fixture(200, 3, 9);
  f.entries[1] = 5000;
  Layout layout = make_layout(f.graph, f.base.record_bytes(), tiny_geometry(), false,
                              PlacementMode::MultiPlane);
  auto r = run_batch(layout, f.base, f.queries, f.entries, ndp_config(true, false));
  EXPECT_TRUE(r.queries[1].faulted);
  EXPECT_FALSE(r.queries[0].faulted);
  EXPECT_EQ(r.counters.faulted, 1u);
  EXPECT_NE(to_json(r).find("\"fault\""), std::string::npos);
}

TEST(RunBatch, BreakdownSumsToOne) {
  Fixture f = fixture(300, 16, 10);
  Layout layout = make_layout(f.graph, f.base.record_bytes(), tiny_geometry(), true,
                              PlacementMode::MultiPlane);
  auto r = run_batch(layout, f.base, f.queries, f.entries, ndp_config(true, true));
  double sum = 0.0;
  for (const auto& [key, value] : r.breakdown()) sum += value;
  EXPECT_NEAR(sum, 1.0, 1e-9);
  EXPECT_EQ(r.breakdown().size(), 6u);
}

}  // namespace
}  // namespace ndsim
