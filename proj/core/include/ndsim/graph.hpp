#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ndsim/error.hpp"
#include "ndsim/vecdata.hpp"

namespace ndsim {

using VertexId = std::uint32_t;

/// Undirected graph in CSR form. Neighbor lists are stored in both
/// directions; every constructor validates the invariants.
class Graph {
 public:
  Graph() = default;
  Graph(std::vector<std::uint64_t> offsets, std::vector<VertexId> neighbors,
        std::uint32_t max_degree, ErrorKind on_violation = ErrorKind::Parameter);

  /// Builds the CSR from adjacency lists; each list is sorted ascending.
  static Graph from_adjacency(std::vector<std::vector<VertexId>> adjacency,
                              std::uint32_t max_degree);

  std::size_t size() const noexcept { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  bool empty() const noexcept { return size() == 0; }
  std::uint64_t edge_entries() const noexcept { return neighbors_.size(); }
  std::uint32_t max_degree() const noexcept { return max_degree_; }

  std::uint32_t degree(VertexId v) const {
    return static_cast<std::uint32_t>(offsets_[v + 1] - offsets_[v]);
  }
  std::span<const VertexId> neighbors(VertexId v) const {
    return std::span<const VertexId>(neighbors_).subspan(offsets_[v], degree(v));
  }
  std::span<const std::uint64_t> offsets() const noexcept { return offsets_; }
  std::span<const VertexId> neighbor_array() const noexcept { return neighbors_; }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  void validate(ErrorKind kind) const;

  std::vector<std::uint64_t> offsets_;
  std::vector<VertexId> neighbors_;
  std::uint32_t max_degree_ = 1;
};

struct Neighbor {
  VertexId id = 0;
  float distance = 0.0f;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Total order used everywhere results are ranked: distance, then vertex ID.
inline bool closer(const Neighbor& a, const Neighbor& b) noexcept {
  return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

struct RandomEntry {
  std::uint64_t seed = 0;
};

struct SearchParams {
  std::uint32_t ef = 32;
  std::uint32_t k = 10;
  DistanceKind kind = DistanceKind::SquaredL2;
  std::variant<VertexId, RandomEntry> entry = RandomEntry{};
};

/// Checks ef >= 1 and 1 <= k <= ef.
void validate(const SearchParams& params);
VertexId resolve_entry(const SearchParams& params, std::size_t n);

struct SearchTrace {
  std::uint64_t query_id = 0;
  /// Vertex expanded in each iteration.
  std::vector<VertexId> entries;
  /// Vertices whose distance to the query was computed, in evaluation order.
  /// Within one expansion the new vertices appear sorted by (distance, ID).
  std::vector<VertexId> visited;

  friend bool operator==(const SearchTrace&, const SearchTrace&) = default;
};

struct SearchResult {
  std::vector<Neighbor> topk;
  SearchTrace trace;
  /// Set when k exceeded the number of vertices and all of them were returned.
  bool k_clamped = false;
};

Graph build_graph(const VectorSet& vectors, std::uint32_t max_degree,
                  std::uint32_t ef_construction, std::uint64_t seed,
                  DistanceKind kind = DistanceKind::SquaredL2);

/// Reference ef-search. Pops the nearest candidate each iteration, stops once
/// it is strictly farther than the worst entry of a full result list, and
/// otherwise scores the candidate's unvisited neighbors. Newly scored
/// neighbors are admitted in (distance, ID) order, which makes the outcome
/// independent of adjacency-list order.
SearchResult beam_search(const Graph& graph, const VectorSet& vectors, const VectorRef& query,
                         const SearchParams& params, std::uint64_t query_id = 0);

std::vector<std::uint8_t> encode_graph(const Graph& graph);
Graph decode_graph(std::span<const std::uint8_t> bytes);
void save_graph(const Graph& graph, const std::filesystem::path& path);
Graph load_graph(const std::filesystem::path& path);

/// One JSON object per line: {"qid":..,"entries":[..],"visited":[..]}.
std::string trace_to_json_line(const SearchTrace& trace);

/// Ring lattice with `k` nearest ring neighbors per vertex (k even), each
/// lattice edge rewired to a uniform random endpoint with probability `p`.
Graph make_small_world(std::size_t n, std::uint32_t k, double p, std::uint64_t seed);

}  // namespace ndsim
