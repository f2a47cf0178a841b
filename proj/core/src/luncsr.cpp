#include "ndsim/luncsr.hpp"

#include <algorithm>

#include "binio.hpp"
#include "ndsim/io.hpp"

namespace ndsim {

namespace {

constexpr std::string_view kLuncsrMagic = "LNCR0001";

std::uint32_t relative_block(const SsdGeometry& g, const PhysicalAddress& a) {
  return a.plane * g.blocks_per_plane + a.block;
}

}  // namespace

Luncsr Luncsr::build(Graph graph, const Placement& placement) {
  placement.geometry.validate();
  if (placement.address.size() < graph.size()) {
    throw Error(ErrorKind::Parameter,
                "placement has no entry for vertex " + std::to_string(placement.address.size()) +
                    " (graph has " + std::to_string(graph.size()) + " vertices)");
  }
  Luncsr out;
  out.geometry_ = placement.geometry;
  out.slots_per_page_ = placement.slots_per_page;
  out.mode_ = placement.mode;
  out.lun_arr_.resize(graph.size());
  out.blk_arr_.resize(graph.size());
  for (VertexId v = 0; v < graph.size(); ++v) {
    const PhysicalAddress& a = placement.address[v];
    out.lun_arr_[v] = global_lun(out.geometry_, a);
    out.blk_arr_[v] = relative_block(out.geometry_, a);
  }
  out.graph_ = std::move(graph);
  out.validate_placement(ErrorKind::Parameter);
  out.index_residents();
  return out;
}

void Luncsr::validate_placement(ErrorKind kind) const {
  const auto& g = geometry_;
  if (slots_per_page_ == 0) throw Error(kind, "slots_per_page must be positive");
  if (lun_arr_.size() != graph_.size() || blk_arr_.size() != graph_.size()) {
    throw Error(kind, "LUN/BLK arrays must have one entry per vertex");
  }
  for (VertexId v = 0; v < graph_.size(); ++v) {
    const PhysicalAddress expect = placement_address(g, slots_per_page_, mode_, v);
    const std::string where = "vertex " + std::to_string(v);
    if (lun_arr_[v] != global_lun(g, expect)) {
      throw Error(kind, where + ": LUN " + std::to_string(lun_arr_[v]) +
                            " differs from its fill-order LUN " +
                            std::to_string(global_lun(g, expect)));
    }
    if (blk_arr_[v] >= g.blocks_per_lun()) {
      throw Error(kind, where + ": block " + std::to_string(blk_arr_[v]) + " out of range");
    }
    if (blk_arr_[v] / g.blocks_per_plane != expect.plane) {
      throw Error(kind, where + ": block " + std::to_string(blk_arr_[v]) + " is not in plane " +
                            std::to_string(expect.plane));
    }
  }
}

void Luncsr::index_residents() {
  residents_.assign(static_cast<std::size_t>(geometry_.total_luns()) * geometry_.blocks_per_lun(),
                    {});
  for (VertexId v = 0; v < graph_.size(); ++v) {
    residents_[static_cast<std::size_t>(lun_arr_[v]) * geometry_.blocks_per_lun() + blk_arr_[v]]
        .push_back(v);
  }
}

void Luncsr::check_block(std::uint32_t lun, std::uint32_t block) const {
  if (lun >= geometry_.total_luns() || block >= geometry_.blocks_per_lun()) {
    throw Error(ErrorKind::Range, "block (" + std::to_string(lun) + ", " +
                                      std::to_string(block) + ") outside the geometry");
  }
}

PhysicalAddress Luncsr::physical_address(VertexId vid) const {
  if (vid >= graph_.size()) {
    throw Error(ErrorKind::Range, "vertex " + std::to_string(vid) + " out of range (n = " +
                                      std::to_string(graph_.size()) + ")");
  }
  PhysicalAddress a = placement_address(geometry_, slots_per_page_, mode_, vid);
  a.plane = blk_arr_[vid] / geometry_.blocks_per_plane;
  a.block = blk_arr_[vid] % geometry_.blocks_per_plane;
  return a;
}

std::span<const VertexId> Luncsr::residents(std::uint32_t lun, std::uint32_t block) const {
  check_block(lun, block);
  return residents_[static_cast<std::size_t>(lun) * geometry_.blocks_per_lun() + block];
}

RefreshEvent Luncsr::refresh_block(std::uint32_t lun, std::uint32_t old_block,
                                   std::mt19937_64& rng) {
  check_block(lun, old_block);
  RefreshEvent event{lun, old_block, old_block, {}};
  const std::size_t base = static_cast<std::size_t>(lun) * geometry_.blocks_per_lun();
  auto& source = residents_[base + old_block];
  if (source.empty()) return event;

  const std::uint32_t first = old_block / geometry_.blocks_per_plane * geometry_.blocks_per_plane;
  std::vector<std::uint32_t> free_blocks;
  for (std::uint32_t b = first; b < first + geometry_.blocks_per_plane; ++b) {
    if (b != old_block && residents_[base + b].empty()) free_blocks.push_back(b);
  }
  if (free_blocks.empty()) {
    throw Error(ErrorKind::Refresh, "no free block in plane " +
                                        std::to_string(old_block / geometry_.blocks_per_plane) +
                                        " of LUN " + std::to_string(lun));
  }
  std::uniform_int_distribution<std::size_t> pick(0, free_blocks.size() - 1);
  event.new_block = free_blocks[pick(rng)];
  for (VertexId v : source) blk_arr_[v] = event.new_block;
  event.moved = source;
  residents_[base + event.new_block] = std::move(source);
  source.clear();
  return event;
}

std::vector<std::uint8_t> encode_luncsr(const Luncsr& luncsr) {
  const SsdGeometry& g = luncsr.geometry();
  detail::ByteWriter out;
  out.magic(kLuncsrMagic);
  for (std::uint32_t field : {g.channels, g.chips_per_channel, g.luns_per_chip, g.planes_per_lun,
                              g.blocks_per_plane, g.pages_per_block, g.page_bytes,
                              g.spare_blocks_per_plane}) {
    out.u32(field);
  }
  out.u32(luncsr.slots_per_page());
  out.u32(static_cast<std::uint32_t>(luncsr.mode()));
  const Graph& graph = luncsr.graph();
  out.u64(graph.size());
  out.u64(graph.edge_entries());
  for (auto off : graph.offsets()) out.u64(off);
  for (auto nb : graph.neighbor_array()) out.u32(nb);
  for (auto l : luncsr.lun_array()) out.u32(l);
  for (auto b : luncsr.blk_array()) out.u32(b);
  out.crc_trailer();
  return std::move(out.bytes());
}

Luncsr decode_luncsr(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes, "LUNCSR container");
  in.expect_magic(kLuncsrMagic, ErrorKind::Artifact);
  Luncsr out;
  SsdGeometry& g = out.geometry_;
  for (std::uint32_t* field : {&g.channels, &g.chips_per_channel, &g.luns_per_chip,
                               &g.planes_per_lun, &g.blocks_per_plane, &g.pages_per_block,
                               &g.page_bytes, &g.spare_blocks_per_plane}) {
    *field = in.u32();
  }
  out.slots_per_page_ = in.u32();
  const std::uint32_t mode = in.u32();
  if (mode > 1) throw Error(ErrorKind::Load, "LUNCSR container: unknown placement mode");
  out.mode_ = static_cast<PlacementMode>(mode);

  const std::uint64_t n = in.u64();
  const std::uint64_t edges = in.u64();
  if (n > in.remaining() / 16 || edges > in.remaining() / 4 ||
      (n + 1) * 8 + edges * 4 + n * 8 + 4 != in.remaining()) {
    throw Error(ErrorKind::Parse, "LUNCSR container: header declares n = " + std::to_string(n) +
                                      ", edges = " + std::to_string(edges) +
                                      " inconsistent with " + std::to_string(in.remaining()) +
                                      " remaining bytes at offset " + std::to_string(in.offset()));
  }
  std::vector<std::uint64_t> offsets(n + 1);
  for (auto& off : offsets) off = in.u64();
  std::vector<VertexId> neighbors(edges);
  for (auto& nb : neighbors) nb = in.u32();
  out.lun_arr_.resize(n);
  for (auto& l : out.lun_arr_) l = in.u32();
  out.blk_arr_.resize(n);
  for (auto& b : out.blk_arr_) b = in.u32();
  in.verify_crc_trailer();

  try {
    g.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Load, std::string("LUNCSR container: ") + e.what());
  }
  std::uint32_t max_degree = 1;
  for (std::uint64_t v = 0; v < n; ++v) {
    if (offsets[v + 1] >= offsets[v]) {
      max_degree = std::max<std::uint32_t>(max_degree,
                                           static_cast<std::uint32_t>(offsets[v + 1] - offsets[v]));
    }
  }
  out.graph_ = Graph(std::move(offsets), std::move(neighbors), max_degree, ErrorKind::Load);
  out.validate_placement(ErrorKind::Load);
  out.index_residents();
  // Vertices sharing a block must come from one original block.
  for (const auto& list : out.residents_) {
    if (list.empty()) continue;
    const std::uint64_t home = placement_address(g, out.slots_per_page_, out.mode_, list.front()).block;
    for (VertexId v : list) {
      if (placement_address(g, out.slots_per_page_, out.mode_, v).block != home) {
        throw Error(ErrorKind::Load, "LUNCSR container: vertex " + std::to_string(v) +
                                         " collides with another block's residents");
      }
    }
  }
  return out;
}

void save_luncsr(const Luncsr& luncsr, const std::filesystem::path& path) {
  write_file_atomic(path, encode_luncsr(luncsr));
}

Luncsr load_luncsr(const std::filesystem::path& path) {
  return decode_luncsr(read_file_bytes(path));
}

}  // namespace ndsim
