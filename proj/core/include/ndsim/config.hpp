#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ndsim/engine.hpp"
#include "ndsim/geometry.hpp"
#include "ndsim/ssdsim.hpp"

namespace ndsim {

/// Everything one experiment needs. Read from a JSON document whose keys
/// mirror these fields; unknown keys are rejected.
struct ExperimentConfig {
  WorkloadSpec workload;
  std::uint32_t ef = 32;
  std::uint32_t k = 10;
  SsdGeometry geometry;
  TimingConfig timing;
  EccModel ecc;
  bool reorder = true;
  bool multiplane = true;
  bool da = true;
  bool sp = false;
  AccelLevel accel = AccelLevel::Lun;
  bool serialize_luns = false;
  std::uint32_t batch_size = 2048;
  std::uint32_t max_batch_per_pass = 2048;
  std::uint32_t refresh_threshold = 10000;
  std::uint64_t seed = 1;
  std::vector<double> ecc_sweep = {0.0, 0.01, 0.05, 0.10, 0.30};
  std::vector<std::uint32_t> batch_sizes = {1, 16, 64, 256, 1024, 2048, 4096};
  std::string output_dir = "ndsim-out";
  std::uint32_t workers = 0;

  /// Sets the master seed; workload, ECC and refresh seeds derive from it.
  void set_seed(std::uint64_t s);
  /// Throws ErrorKind::Config on an invalid combination.
  void validate() const;

  EngineConfig engine() const;
};

/// Overlays the keys present in `json_text` onto `base`.
ExperimentConfig parse_config(const std::string& json_text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
/// Canonical JSON of every field, suitable for replay.
std::string config_to_json(const ExperimentConfig& config);

}  // namespace ndsim
