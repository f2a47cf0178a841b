#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "ndsim/error.hpp"
#include "ndsim/reorder.hpp"
#include "test_support.hpp"

namespace ndsim {
namespace {

double bandwidth_oracle(const Graph& g, const std::vector<VertexId>& label) {
  double sum = 0.0;
  for (VertexId v = 0; v < g.size(); ++v) {
    std::int64_t worst = 0;
    for (VertexId u : g.neighbors(v)) {
      worst = std::max<std::int64_t>(worst, std::llabs(std::int64_t{label[v]} - label[u]));
    }
    sum += static_cast<double>(worst);
  }
  return g.size() ? sum / static_cast<double>(g.size()) : 0.0;
}

Graph edges_to_graph(std::size_t n, const std::vector<std::pair<VertexId, VertexId>>& edges) {
  std::vector<std::vector<VertexId>> adj(n);
  std::uint32_t r = 1;
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& l : adj) r = std::max<std::uint32_t>(r, static_cast<std::uint32_t>(l.size()));
  return Graph::from_adjacency(adj, r);
}

// Eight vertices a..h (IDs 0..7) with degrees h:1, g:2, d:5, a:3, c:4, e:3, f:3, b:3.
enum : VertexId { A, B, C, D, E, F, G, H };
Graph worked_example() {
  return edges_to_graph(8, {{H, G}, {G, D}, {D, A}, {D, C}, {D, E}, {D, F},
                            {A, B}, {A, C}, {C, B}, {C, F}, {E, F}, {E, B}});
}

TEST(Bandwidth, HandValues) {
  Graph path = edges_to_graph(4, {{0, 1}, {1, 2}, {2, 3}});
  EXPECT_DOUBLE_EQ(bandwidth(path, Ordering::identity(4)), 1.0);
  Graph star = edges_to_graph(4, {{0, 1}, {0, 2}, {0, 3}});
  EXPECT_DOUBLE_EQ(bandwidth(star, Ordering::identity(4)), 2.25);
}

TEST(Bandwidth, MatchesOracleAndRelabelInvariance) {
  Graph g = build_graph(testing::random_vectors(300, 4, 1), 6, 12, 1);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Ordering o = random_bfs(g, seed);
    std::vector<VertexId> label(o.perm().begin(), o.perm().end());
    EXPECT_DOUBLE_EQ(bandwidth(g, o), bandwidth_oracle(g, label));
    EXPECT_DOUBLE_EQ(bandwidth(apply_ordering(g, o), Ordering::identity(g.size())),
                     bandwidth(g, o));
  }
}

TEST(Ordering, RejectsNonBijection) {
  EXPECT_THROW(Ordering({0, 0, 1}), Error);
  EXPECT_THROW(Ordering({0, 3}), Error);
  Ordering o({2, 0, 1});
  EXPECT_EQ(o.inverse()[2], 0u);
  EXPECT_EQ(decode_ordering(encode_ordering(o)), o);
}

TEST(DegreeAscendingBfs, Star) {
  Graph star = edges_to_graph(4, {{0, 1}, {0, 2}, {0, 3}});
  Ordering o = degree_ascending_bfs(star);
  EXPECT_EQ(o[1], 0u);
  EXPECT_EQ(o[0], 1u);
  EXPECT_EQ(o[2], 2u);
  EXPECT_EQ(o[3], 3u);
}

TEST(DegreeAscendingBfs, WorkedExample) {
  Graph g = worked_example();
  ASSERT_EQ(g.degree(D), 5u);
  ASSERT_EQ(g.degree(C), 4u);
  Ordering o = degree_ascending_bfs(g);
  EXPECT_EQ(o[H], 0u);
  EXPECT_EQ(o[G], 1u);
  EXPECT_EQ(o[D], 2u);
  EXPECT_EQ(o[A], 3u);
  EXPECT_EQ(o[E], 4u);
  EXPECT_EQ(o[F], 5u);
  EXPECT_EQ(o[C], 6u);
  EXPECT_EQ(o[B], 7u);
}

TEST(DegreeAscendingBfs, WorkedExampleBeatsMedianOrdering) {
  Graph g = worked_example();
  const double ours = bandwidth(g, degree_ascending_bfs(g));
  std::vector<VertexId> label(8);
  std::iota(label.begin(), label.end(), VertexId{0});
  std::vector<double> all;
  do {
    all.push_back(bandwidth_oracle(g, label));
  } while (std::next_permutation(label.begin(), label.end()));
  std::nth_element(all.begin(), all.begin() + all.size() / 2, all.end());
  EXPECT_LT(ours, all[all.size() / 2]);
}

TEST(DegreeAscendingBfs, RestartsOnEachComponent) {
  Graph g = edges_to_graph(4, {{0, 1}, {2, 3}});
  Ordering o = degree_ascending_bfs(g);
  EXPECT_EQ(std::vector<VertexId>(o.perm().begin(), o.perm().end()),
            (std::vector<VertexId>{0, 1, 2, 3}));
  EXPECT_EQ(o, degree_ascending_bfs(g));
}

TEST(RandomBfs, DeterministicAndSpread) {
  EXPECT_EQ(random_bfs(edges_to_graph(1, {}), 5), Ordering::identity(1));
  Graph g = build_graph(testing::random_vectors(64, 3, 2), 4, 8, 2);
  EXPECT_EQ(random_bfs(g, 11), random_bfs(g, 11));
  std::vector<double> betas;
  for (std::uint64_t s = 0; s < 100; ++s) betas.push_back(bandwidth(g, random_bfs(g, s)));
  std::sort(betas.begin(), betas.end());
  EXPECT_LE(betas.front(), betas[50]);
  EXPECT_LT(betas.front(), betas.back());
}

TEST(ApplyOrdering, IdentityAndInverse) {
  Graph g = build_graph(testing::random_vectors(80, 3, 3), 5, 10, 3);
  EXPECT_EQ(apply_ordering(g, Ordering::identity(g.size())), g);
  Ordering o = random_bfs(g, 4);
  EXPECT_EQ(apply_ordering(apply_ordering(g, o), o.inverse()), g);
}

SsdGeometry one_lun_two_planes() {
  SsdGeometry g;
  g.channels = g.chips_per_channel = g.luns_per_chip = 1;
  g.planes_per_lun = 2;
  g.blocks_per_plane = 4;
  g.pages_per_block = 4;
  g.page_bytes = 64;
  g.spare_blocks_per_plane = 1;
  return g;
}

TEST(MapToPhysical, TwoPlaneExample) {
  Placement p = map_to_physical(8, one_lun_two_planes(), 4);
  for (VertexId v = 0; v < 8; ++v) {
    EXPECT_EQ(p.address[v].plane, v < 4 ? 0u : 1u);
    EXPECT_EQ(p.address[v].page, 0u);
    EXPECT_EQ(p.address[v].block, 0u);
    EXPECT_EQ(p.address[v].slot, v % 4);
  }
}

TEST(MapToPhysical, TwoLunExample) {
  SsdGeometry g = one_lun_two_planes();
  g.luns_per_chip = 2;
  Placement p = map_to_physical(5, g, 1);
  EXPECT_EQ(p.address[4].lun, 0u);
  EXPECT_EQ(p.address[4].plane, 0u);
  EXPECT_EQ(p.address[4].page, 1u);
}

// Capacity-filling placement is a bijection onto data slots, every address is
// in bounds, and each co-paged LUN group spans distinct planes at one page.
TEST(MapToPhysical, FullCapacityIsBijective) {
  const SsdGeometry g = testing::tiny_geometry();
  const std::uint32_t slots = 3;
  const std::size_t n = std::size_t{g.total_luns()} * g.planes_per_lun *
                        g.data_blocks_per_plane() * g.pages_per_block * slots;
  for (PlacementMode mode : {PlacementMode::MultiPlane, PlacementMode::Striped}) {
    Placement p = map_to_physical(n, g, slots, mode);
    std::set<PhysicalAddress> seen(p.address.begin(), p.address.end());
    EXPECT_EQ(seen.size(), n);
    for (const auto& a : p.address) {
      EXPECT_LT(a.channel, g.channels);
      EXPECT_LT(a.chip, g.chips_per_channel);
      EXPECT_LT(a.lun, g.luns_per_chip);
      EXPECT_LT(a.plane, g.planes_per_lun);
      EXPECT_LT(a.block, g.data_blocks_per_plane());
      EXPECT_LT(a.page, g.pages_per_block);
      EXPECT_LT(a.slot, slots);
    }
    EXPECT_THROW(map_to_physical(n + 1, g, slots, mode), Error);
  }
  Placement mp = map_to_physical(n, g, slots, PlacementMode::MultiPlane);
  const std::size_t group = std::size_t{slots} * g.planes_per_lun;
  for (std::size_t start = 0; start < n; start += group) {
    std::set<std::uint32_t> planes;
    for (std::size_t v = start; v < start + group; ++v) {
      const auto& a = mp.address[v];
      EXPECT_EQ(global_lun(g, a), global_lun(g, mp.address[start]));
      EXPECT_EQ(a.page, mp.address[start].page);
      EXPECT_EQ(a.block, mp.address[start].block);
      planes.insert(a.plane);
    }
    EXPECT_EQ(planes.size(), g.planes_per_lun);
  }
}

TEST(MapToPhysical, CapacityErrorNamesCounts) {
  try {
    map_to_physical(1000, one_lun_two_planes(), 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Geometry);
    EXPECT_NE(std::string(e.what()).find("1000"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace ndsim
