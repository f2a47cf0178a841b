#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "ndsim/geometry.hpp"
#include "ndsim/graph.hpp"
#include "ndsim/reorder.hpp"

namespace ndsim {

struct RefreshEvent {
  std::uint32_t lun = 0;
  std::uint32_t old_block = 0;
  std::uint32_t new_block = 0;
  /// Vertices relocated by the refresh; empty when the block held nothing.
  std::vector<VertexId> moved;

  bool empty() const noexcept { return moved.empty(); }
};

/// CSR graph plus per-vertex LUN and block arrays. Page and slot are derived
/// from the vertex ID, so relocating a block only rewrites block entries.
///
/// Block IDs are relative to the LUN: plane * blocks_per_plane + block.
/// LUN IDs are global (see SsdGeometry::channel_of and friends).
class Luncsr {
 public:
  Luncsr() = default;

  /// Throws ErrorKind::Parameter when the placement lacks a vertex or
  /// disagrees with the arithmetic page/slot layout.
  static Luncsr build(Graph graph, const Placement& placement);

  std::size_t size() const noexcept { return graph_.size(); }
  const Graph& graph() const noexcept { return graph_; }
  const SsdGeometry& geometry() const noexcept { return geometry_; }
  std::uint32_t slots_per_page() const noexcept { return slots_per_page_; }
  PlacementMode mode() const noexcept { return mode_; }

  std::span<const VertexId> neighbors(VertexId v) const { return graph_.neighbors(v); }
  std::span<const std::uint32_t> lun_array() const noexcept { return lun_arr_; }
  std::span<const std::uint32_t> blk_array() const noexcept { return blk_arr_; }

  std::uint32_t lun_of(VertexId v) const { return lun_arr_.at(v); }
  PhysicalAddress physical_address(VertexId vid) const;

  /// Moves every vertex of (lun, old_block) to a uniformly chosen free block
  /// of the same plane. Throws ErrorKind::Refresh when the plane is full.
  RefreshEvent refresh_block(std::uint32_t lun, std::uint32_t old_block, std::mt19937_64& rng);

  std::span<const VertexId> residents(std::uint32_t lun, std::uint32_t block) const;

  /// Bytes taken by the LUN and block arrays.
  std::uint64_t placement_bytes() const noexcept {
    return (lun_arr_.size() + blk_arr_.size()) * sizeof(std::uint32_t);
  }

  friend bool operator==(const Luncsr& a, const Luncsr& b) {
    return a.graph_ == b.graph_ && a.geometry_ == b.geometry_ &&
           a.slots_per_page_ == b.slots_per_page_ && a.mode_ == b.mode_ &&
           a.lun_arr_ == b.lun_arr_ && a.blk_arr_ == b.blk_arr_;
  }

 private:
  friend Luncsr decode_luncsr(std::span<const std::uint8_t> bytes);

  void check_block(std::uint32_t lun, std::uint32_t block) const;
  void index_residents();
  void validate_placement(ErrorKind kind) const;

  Graph graph_;
  SsdGeometry geometry_;
  std::uint32_t slots_per_page_ = 1;
  PlacementMode mode_ = PlacementMode::MultiPlane;
  std::vector<std::uint32_t> lun_arr_;
  std::vector<std::uint32_t> blk_arr_;
  // Vertices per (lun * blocks_per_lun + block).
  std::vector<std::vector<VertexId>> residents_;
};

std::vector<std::uint8_t> encode_luncsr(const Luncsr& luncsr);
Luncsr decode_luncsr(std::span<const std::uint8_t> bytes);
void save_luncsr(const Luncsr& luncsr, const std::filesystem::path& path);
Luncsr load_luncsr(const std::filesystem::path& path);

}  // namespace ndsim
