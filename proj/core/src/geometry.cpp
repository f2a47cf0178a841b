#include "ndsim/geometry.hpp"

#include <string>

#include "ndsim/error.hpp"

namespace ndsim {

void SsdGeometry::validate() const {
  auto positive = [](std::uint32_t v, const char* name) {
    if (v == 0) throw Error(ErrorKind::Geometry, std::string(name) + " must be positive");
  };
  positive(channels, "channels");
  positive(chips_per_channel, "chips_per_channel");
  positive(luns_per_chip, "luns_per_chip");
  positive(planes_per_lun, "planes_per_lun");
  positive(blocks_per_plane, "blocks_per_plane");
  positive(pages_per_block, "pages_per_block");
  positive(page_bytes, "page_bytes");
  if (spare_blocks_per_plane >= blocks_per_plane) {
    throw Error(ErrorKind::Geometry, "spare_blocks_per_plane (" +
                                         std::to_string(spare_blocks_per_plane) +
                                         ") leaves no data block in a plane of " +
                                         std::to_string(blocks_per_plane));
  }
}

std::uint32_t global_lun(const SsdGeometry& geometry, const PhysicalAddress& address) noexcept {
  return (address.channel * geometry.chips_per_channel + address.chip) * geometry.luns_per_chip +
         address.lun;
}

}  // namespace ndsim
