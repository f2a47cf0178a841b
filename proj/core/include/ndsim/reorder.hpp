#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "ndsim/geometry.hpp"
#include "ndsim/graph.hpp"

namespace ndsim {

/// Relabeling f with perm[old_id] = new_id.
class Ordering {
 public:
  Ordering() = default;
  /// Throws ErrorKind::Parameter unless `perm` is a bijection on 0..n-1.
  explicit Ordering(std::vector<VertexId> perm);

  static Ordering identity(std::size_t n);

  std::size_t size() const noexcept { return perm_.size(); }
  VertexId operator[](VertexId old_id) const { return perm_[old_id]; }
  std::span<const VertexId> perm() const noexcept { return perm_; }
  /// inverse()[new_id] = old_id.
  Ordering inverse() const;

  friend bool operator==(const Ordering&, const Ordering&) = default;

 private:
  std::vector<VertexId> perm_;
};

/// Average over vertices of the largest label distance to a neighbor.
double bandwidth(const Graph& graph, const Ordering& ordering);

/// One-pass BFS that starts at a minimum-degree vertex and enqueues unvisited
/// neighbors by ascending degree; ties go to the smaller old ID.
Ordering degree_ascending_bfs(const Graph& graph);

/// BFS with a random root, random neighbor order and random restarts.
Ordering random_bfs(const Graph& graph, std::uint64_t seed);

/// Relabels vertices through `ordering`; neighbor lists are re-sorted.
Graph apply_ordering(const Graph& graph, const Ordering& ordering);

std::vector<std::uint8_t> encode_ordering(const Ordering& ordering);
Ordering decode_ordering(std::span<const std::uint8_t> bytes);
void save_ordering(const Ordering& ordering, const std::filesystem::path& path);
Ordering load_ordering(const std::filesystem::path& path);

enum class PlacementMode : std::uint8_t {
  /// Consecutive pages fill every plane of a LUN at one page address before
  /// moving to the next LUN, so co-paged runs are multi-plane legal.
  MultiPlane = 0,
  /// Pages are striped across LUNs and fill plane 0 of each LUN first.
  Striped = 1,
};

std::string_view to_string(PlacementMode mode) noexcept;

struct Placement {
  SsdGeometry geometry;
  std::uint32_t slots_per_page = 1;
  PlacementMode mode = PlacementMode::MultiPlane;
  /// Indexed by (new) vertex ID.
  std::vector<PhysicalAddress> address;
};

/// Vector slots per page: floor(page_bytes / record_bytes).
std::uint32_t slots_per_page_for(const SsdGeometry& geometry, std::size_t record_bytes);

/// Pure arithmetic address of vertex `vid` under the given layout.
PhysicalAddress placement_address(const SsdGeometry& geometry, std::uint32_t slots_per_page,
                                  PlacementMode mode, std::uint64_t vid);

/// Places vertices 0..n-1 in ID order. Throws ErrorKind::Geometry when n
/// exceeds the data slots of the geometry.
Placement map_to_physical(std::size_t n, const SsdGeometry& geometry,
                          std::uint32_t slots_per_page,
                          PlacementMode mode = PlacementMode::MultiPlane);

}  // namespace ndsim
