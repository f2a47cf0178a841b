#include "ndsim/reorder.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <queue>
#include <random>

#include "binio.hpp"
#include "ndsim/io.hpp"

namespace ndsim {

namespace {

constexpr std::string_view kOrderingMagic = "ORDR0001";

void require_same_size(const Graph& graph, const Ordering& ordering) {
  if (graph.size() != ordering.size()) {
    throw Error(ErrorKind::Parameter, "ordering covers " + std::to_string(ordering.size()) +
                                          " vertices, graph has " + std::to_string(graph.size()));
  }
}

// Assigns labels in BFS order. `next_root` returns an unlabeled vertex to
// restart from; `order_neighbors` arranges the unlabeled neighbors of the
// vertex being expanded before they are enqueued.
template <class NextRoot, class OrderNeighbors>
Ordering bfs_labels(const Graph& graph, NextRoot&& next_root, OrderNeighbors&& order_neighbors) {
  const std::size_t n = graph.size();
  constexpr VertexId kUnset = ~VertexId{0};
  std::vector<VertexId> perm(n, kUnset);
  std::queue<VertexId> queue;
  std::vector<VertexId> fresh;
  VertexId label = 0;
  while (label < n) {
    const VertexId root = next_root(perm);
    perm[root] = label++;
    queue.push(root);
    while (!queue.empty()) {
      const VertexId v = queue.front();
      queue.pop();
      fresh.clear();
      for (VertexId u : graph.neighbors(v)) {
        if (perm[u] == kUnset) fresh.push_back(u);
      }
      order_neighbors(fresh);
      for (VertexId u : fresh) {
        perm[u] = label++;
        queue.push(u);
      }
    }
  }
  return Ordering(std::move(perm));
}

}  // namespace

Ordering::Ordering(std::vector<VertexId> perm) : perm_(std::move(perm)) {
  std::vector<bool> seen(perm_.size(), false);
  for (std::size_t i = 0; i < perm_.size(); ++i) {
    const VertexId p = perm_[i];
    if (p >= perm_.size() || seen[p]) {
      throw Error(ErrorKind::Parameter, "ordering is not a permutation: perm[" +
                                            std::to_string(i) + "] = " + std::to_string(p));
    }
    seen[p] = true;
  }
}

Ordering Ordering::identity(std::size_t n) {
  std::vector<VertexId> perm(n);
  std::iota(perm.begin(), perm.end(), VertexId{0});
  return Ordering(std::move(perm));
}

Ordering Ordering::inverse() const {
  std::vector<VertexId> inv(perm_.size());
  for (std::size_t i = 0; i < perm_.size(); ++i) inv[perm_[i]] = static_cast<VertexId>(i);
  return Ordering(std::move(inv));
}

double bandwidth(const Graph& graph, const Ordering& ordering) {
  require_same_size(graph, ordering);
  if (graph.empty()) return 0.0;
  std::uint64_t total = 0;
  for (VertexId v = 0; v < graph.size(); ++v) {
    std::uint64_t widest = 0;
    const auto fv = static_cast<std::int64_t>(ordering[v]);
    for (VertexId u : graph.neighbors(v)) {
      const auto gap = static_cast<std::uint64_t>(std::abs(fv - static_cast<std::int64_t>(ordering[u])));
      widest = std::max(widest, gap);
    }
    total += widest;
  }
  return static_cast<double>(total) / static_cast<double>(graph.size());
}

Ordering degree_ascending_bfs(const Graph& graph) {
  const std::size_t n = graph.size();
  auto by_degree = [&](VertexId a, VertexId b) {
    const auto da = graph.degree(a);
    const auto db = graph.degree(b);
    return da < db || (da == db && a < b);
  };
  std::vector<VertexId> roots(n);
  std::iota(roots.begin(), roots.end(), VertexId{0});
  std::sort(roots.begin(), roots.end(), by_degree);
  std::size_t cursor = 0;
  return bfs_labels(
      graph,
      [&](const std::vector<VertexId>& perm) {
        while (perm[roots[cursor]] != ~VertexId{0}) ++cursor;
        return roots[cursor];
      },
      [&](std::vector<VertexId>& fresh) { std::sort(fresh.begin(), fresh.end(), by_degree); });
}

Ordering random_bfs(const Graph& graph, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<VertexId> roots(graph.size());
  std::iota(roots.begin(), roots.end(), VertexId{0});
  std::shuffle(roots.begin(), roots.end(), rng);
  std::size_t cursor = 0;
  return bfs_labels(
      graph,
      [&](const std::vector<VertexId>& perm) {
        while (perm[roots[cursor]] != ~VertexId{0}) ++cursor;
        return roots[cursor];
      },
      [&](std::vector<VertexId>& fresh) { std::shuffle(fresh.begin(), fresh.end(), rng); });
}

Graph apply_ordering(const Graph& graph, const Ordering& ordering) {
  require_same_size(graph, ordering);
  std::vector<std::vector<VertexId>> adj(graph.size());
  for (VertexId v = 0; v < graph.size(); ++v) {
    auto& list = adj[ordering[v]];
    for (VertexId u : graph.neighbors(v)) list.push_back(ordering[u]);
  }
  return Graph::from_adjacency(std::move(adj), graph.max_degree());
}

std::vector<std::uint8_t> encode_ordering(const Ordering& ordering) {
  detail::ByteWriter out;
  out.magic(kOrderingMagic);
  out.u64(ordering.size());
  for (VertexId p : ordering.perm()) out.u32(p);
  return std::move(out.bytes());
}

Ordering decode_ordering(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes, "ordering file");
  in.expect_magic(kOrderingMagic, ErrorKind::Artifact);
  const std::uint64_t n = in.u64();
  if (n > in.remaining() / 4 || n * 4 != in.remaining()) {
    throw Error(ErrorKind::Parse, "ordering file: header declares n = " + std::to_string(n) +
                                      " but " + std::to_string(in.remaining()) +
                                      " bytes follow at offset " + std::to_string(in.offset()));
  }
  std::vector<VertexId> perm(n);
  for (auto& p : perm) p = in.u32();
  try {
    return Ordering(std::move(perm));
  } catch (const Error& e) {
    throw Error(ErrorKind::Load, e.what());
  }
}

void save_ordering(const Ordering& ordering, const std::filesystem::path& path) {
  write_file_atomic(path, encode_ordering(ordering));
}

Ordering load_ordering(const std::filesystem::path& path) {
  return decode_ordering(read_file_bytes(path));
}

std::string_view to_string(PlacementMode mode) noexcept {
  return mode == PlacementMode::MultiPlane ? "multi_plane" : "striped";
}

std::uint32_t slots_per_page_for(const SsdGeometry& geometry, std::size_t record_bytes) {
  if (record_bytes == 0) throw Error(ErrorKind::Parameter, "vector record size must be positive");
  if (record_bytes > geometry.page_bytes) {
    throw Error(ErrorKind::Geometry, "a " + std::to_string(record_bytes) +
                                         "-byte vector does not fit a " +
                                         std::to_string(geometry.page_bytes) + "-byte page");
  }
  return static_cast<std::uint32_t>(geometry.page_bytes / record_bytes);
}

PhysicalAddress placement_address(const SsdGeometry& g, std::uint32_t slots_per_page,
                                  PlacementMode mode, std::uint64_t vid) {
  const std::uint64_t chunk = vid / slots_per_page;
  const std::uint64_t luns = g.total_luns();
  std::uint64_t lun = 0;
  std::uint64_t plane = 0;
  std::uint64_t page_index = 0;
  if (mode == PlacementMode::MultiPlane) {
    plane = chunk % g.planes_per_lun;
    const std::uint64_t t = chunk / g.planes_per_lun;
    lun = t % luns;
    page_index = t / luns;
  } else {
    const std::uint64_t pages_per_plane =
        static_cast<std::uint64_t>(g.data_blocks_per_plane()) * g.pages_per_block;
    lun = chunk % luns;
    const std::uint64_t j = chunk / luns;
    plane = j / pages_per_plane;
    page_index = j % pages_per_plane;
  }
  PhysicalAddress a;
  const auto l = static_cast<std::uint32_t>(lun);
  a.channel = g.channel_of(l);
  a.chip = g.chip_in_channel(l);
  a.lun = g.lun_in_chip(l);
  a.plane = static_cast<std::uint32_t>(plane);
  a.block = static_cast<std::uint32_t>(page_index / g.pages_per_block);
  a.page = static_cast<std::uint32_t>(page_index % g.pages_per_block);
  a.slot = static_cast<std::uint32_t>(vid % slots_per_page);
  return a;
}

Placement map_to_physical(std::size_t n, const SsdGeometry& geometry,
                          std::uint32_t slots_per_page, PlacementMode mode) {
  geometry.validate();
  if (slots_per_page == 0) throw Error(ErrorKind::Parameter, "slots_per_page must be positive");
  const std::uint64_t capacity = static_cast<std::uint64_t>(geometry.total_luns()) *
                                 geometry.planes_per_lun * geometry.data_blocks_per_plane() *
                                 geometry.pages_per_block * slots_per_page;
  if (n > capacity) {
    throw Error(ErrorKind::Geometry, "placement needs " + std::to_string(n) +
                                         " slots but the geometry provides " +
                                         std::to_string(capacity));
  }
  Placement placement{geometry, slots_per_page, mode, {}};
  placement.address.reserve(n);
  for (std::uint64_t v = 0; v < n; ++v) {
    placement.address.push_back(placement_address(geometry, slots_per_page, mode, v));
  }
  return placement;
}

}  // namespace ndsim
