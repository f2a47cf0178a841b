#pragma once

#include <compare>
#include <cstdint>

namespace ndsim {

/// Channel / chip / LUN / plane / block / page hierarchy of the simulated SSD.
struct SsdGeometry {
  std::uint32_t channels = 32;
  std::uint32_t chips_per_channel = 4;
  std::uint32_t luns_per_chip = 2;
  std::uint32_t planes_per_lun = 2;
  std::uint32_t blocks_per_plane = 512;
  std::uint32_t pages_per_block = 128;
  std::uint32_t page_bytes = 16384;
  /// Blocks per plane held back as refresh targets; never used by placement.
  std::uint32_t spare_blocks_per_plane = 16;

  /// 32 channels x 4 chips x 2 LUNs x 2 planes x 512 blocks x 128 pages x 16 KiB.
  static SsdGeometry standard() { return {}; }

  /// Throws ErrorKind::Geometry when a field is zero or no data block remains.
  void validate() const;

  std::uint32_t total_chips() const noexcept { return channels * chips_per_channel; }
  std::uint32_t total_luns() const noexcept { return total_chips() * luns_per_chip; }
  std::uint32_t data_blocks_per_plane() const noexcept {
    return blocks_per_plane - spare_blocks_per_plane;
  }
  /// Blocks of one LUN, numbered plane * blocks_per_plane + block.
  std::uint32_t blocks_per_lun() const noexcept { return planes_per_lun * blocks_per_plane; }

  // Global LUN index l = (channel * chips_per_channel + chip) * luns_per_chip + lun_in_chip.
  std::uint32_t channel_of(std::uint32_t lun) const noexcept {
    return lun / (chips_per_channel * luns_per_chip);
  }
  std::uint32_t chip_of(std::uint32_t lun) const noexcept { return lun / luns_per_chip; }
  std::uint32_t chip_in_channel(std::uint32_t lun) const noexcept {
    return chip_of(lun) % chips_per_channel;
  }
  std::uint32_t lun_in_chip(std::uint32_t lun) const noexcept { return lun % luns_per_chip; }

  friend bool operator==(const SsdGeometry&, const SsdGeometry&) = default;
};

struct PhysicalAddress {
  std::uint32_t channel = 0;
  std::uint32_t chip = 0;  // within the channel
  std::uint32_t lun = 0;   // within the chip
  std::uint32_t plane = 0;
  std::uint32_t block = 0;  // within the plane
  std::uint32_t page = 0;   // within the block
  std::uint32_t slot = 0;   // vector slot (column) within the page

  friend auto operator<=>(const PhysicalAddress&, const PhysicalAddress&) = default;
};

/// Global LUN index of an address.
std::uint32_t global_lun(const SsdGeometry& geometry, const PhysicalAddress& address) noexcept;

}  // namespace ndsim
