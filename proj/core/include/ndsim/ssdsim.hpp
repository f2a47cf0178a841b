#pragma once

#include <array>
#include <deque>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "ndsim/geometry.hpp"
#include "ndsim/vecdata.hpp"

namespace ndsim {

/// Simulated time in picoseconds since the start of a run.
using SimDuration = std::chrono::duration<std::int64_t, std::pico>;
using SimTime = SimDuration;

SimDuration from_us(double microseconds);
double to_us(SimDuration d) noexcept;

/// Latency parameters, in microseconds unless noted.
struct TimingConfig {
  double t_page_read_us = 60.0;      // NAND array to page buffer
  double t_chip_bus_xfer_us = 30.0;  // one full page across a chip or channel bus
  double t_mac_per_vector_us = 0.5;
  double t_dram_access_us = 0.1;     // one 64-byte DRAM access
  std::uint32_t dram_parallelism = 16;  // accesses in flight in the address pipeline
  double t_core_op_us = 0.01;
  double t_pcie_per_kb_us = 0.32;    // PCIe 3.0 x4 at 3.2 GB/s
  double t_soft_ldpc_us = 10.0;
  double t_sort_base_us = 0.2;       // bitonic sorter fixed cost per list
  double t_sort_per_item_us = 0.002; // per padded element
  std::uint32_t embedded_cores = 4;
  /// Soft-decision decoders shared by the whole device; 0 means one per plane.
  std::uint32_t soft_decoders = 8;
  /// Host threads computing distances when the accelerator sits on the host.
  std::uint32_t host_threads = 16;

  /// Throws ErrorKind::Config on negative durations or zero counts.
  void validate() const;
};

struct EccModel {
  /// Probability that hard-decision decoding of one page read fails.
  double p_hard_fail = 0.01;
  /// Mean raw bit error rate; per-plane rates are drawn log-normally.
  double ber_mean = 1e-6;
  double ber_log_sigma = 0.5;
  std::uint64_t seed = 1;
};

enum class AccelLevel : std::uint8_t { Lun, Chip, Channel, Host };

std::string_view to_string(AccelLevel level) noexcept;
AccelLevel accel_level_from_name(std::string_view name);

struct PlaneTarget {
  std::uint32_t plane = 0;
  std::uint32_t block = 0;  // within the plane
  std::uint32_t page = 0;   // within the block
  /// Distance computations served by this page.
  std::uint32_t candidates = 0;
};

/// Multi-plane "search page" command addressed to one LUN.
struct SearchPageCmd {
  std::uint32_t lun = 0;  // global LUN index
  DistanceKind distance = DistanceKind::SquaredL2;
  /// Set when two or more queries share a targeted page.
  bool page_loc_bit = false;
  std::vector<PlaneTarget> planes;
};

enum class MultiplaneViolation : std::uint8_t { None, NoPlanes, PlanesNotDistinct, AddressMismatch };

/// "ok", "plane address bits shall be distinct", ...
std::string_view to_string(MultiplaneViolation violation) noexcept;

/// Checks that planes are distinct and share one page address. Blocks may
/// differ between planes.
MultiplaneViolation validate_multiplane(const SearchPageCmd& cmd) noexcept;

enum class Priority : std::uint8_t { Normal, Speculative };

enum class ChargeCategory : std::uint8_t { NandRead, Dram, Core, Bus, Pcie, Sort };
inline constexpr std::size_t kChargeCategories = 6;
std::string_view to_string(ChargeCategory category) noexcept;

/// Accumulated busy time per component category.
struct Charges {
  std::array<SimDuration, kChargeCategories> total{};

  void add(ChargeCategory c, SimDuration d) { total[static_cast<std::size_t>(c)] += d; }
  SimDuration operator[](ChargeCategory c) const { return total[static_cast<std::size_t>(c)]; }
  Charges& operator+=(const Charges& other);
};

struct SimCounters {
  std::uint64_t page_accesses = 0;
  std::uint64_t page_reads = 0;
  std::uint64_t buffer_hits = 0;
  std::uint64_t ecc_soft_events = 0;
  std::uint64_t commands = 0;
  std::uint64_t multiplane_commands = 0;
  std::uint64_t spec_submitted = 0;
  std::uint64_t spec_completed = 0;
  std::uint64_t spec_aborted = 0;

  std::map<std::string, std::uint64_t> as_map() const;
  SimCounters& operator+=(const SimCounters& other);
  friend bool operator==(const SimCounters&, const SimCounters&) = default;
};

enum class CommandState : std::uint8_t { Queued, Running, Done, Aborted };

struct CommandStatus {
  CommandState state = CommandState::Queued;
  Priority priority = Priority::Normal;
  SimTime submitted{};
  SimTime started{};
  SimTime finished{};
  /// Per plane target: 1 when the page came from the array, 0 on a buffer hit.
  std::vector<std::uint8_t> plane_read;
};

struct BusyInterval {
  SimTime begin{};
  SimTime end{};
};

struct SimOptions {
  AccelLevel level = AccelLevel::Lun;
  /// Run the LUNs of a chip one at a time (no multi-LUN operation).
  bool serialize_luns = false;
  EccModel ecc;
  /// Reads of one block after which it is reported for refresh.
  std::uint32_t refresh_threshold = 10000;
  bool record_events = false;
  bool record_busy_intervals = false;
};

struct BlockRef {
  std::uint32_t lun = 0;
  std::uint32_t block = 0;  // LUN-relative: plane * blocks_per_plane + block
};

using CommandId = std::uint32_t;

/// Single-threaded discrete-event model of the flash array. Events run in
/// (time, sequence) order, so a run is a pure function of its inputs.
class SsdSim {
 public:
  SsdSim(const SsdGeometry& geometry, const TimingConfig& timing, const SimOptions& options);

  /// Queues `cmd` at time `at` (>= now). Throws ErrorKind::Simulation on an
  /// unknown LUN, an out-of-range address or a multi-plane violation.
  CommandId submit(const SearchPageCmd& cmd, SimTime at, Priority priority = Priority::Normal);

  /// Runs until every normal-priority command has finished; returns the
  /// finish time of the last one (or now when none were pending).
  SimTime drain_normal();
  /// Processes all events at or before `t` and advances the clock to `t`.
  void run_until(SimTime t);
  /// Cancels queued and running speculative commands at time `t`.
  void abort_speculative(SimTime t);

  SimTime now() const noexcept { return now_; }
  const CommandStatus& status(CommandId id) const { return commands_.at(id - first_id_).status; }
  /// ID the next submitted command will receive.
  CommandId next_id() const noexcept {
    return first_id_ + static_cast<CommandId>(commands_.size());
  }
  /// Drops bookkeeping for commands with IDs below `upto`; all of them must
  /// be done or aborted. Keeps memory flat across long runs.
  void retire(CommandId upto);

  bool latched(std::uint32_t lun, const PlaneTarget& target) const;
  void invalidate_latch(std::uint32_t lun, std::uint32_t plane);

  /// Blocks whose read count reached the refresh threshold since the last
  /// call; their counters restart at zero.
  std::vector<BlockRef> take_hot_blocks();
  std::uint64_t block_reads(std::uint32_t lun, std::uint32_t block) const;

  const SimCounters& counters() const noexcept { return counters_; }
  const Charges& charges() const noexcept { return charges_; }
  /// Charges added outside the flash array (allocation, gathering, sorting).
  void charge(ChargeCategory category, SimDuration d) { charges_.add(category, d); }

  std::size_t unit_count() const noexcept { return units_.size(); }
  SimDuration unit_busy(std::size_t unit) const { return units_.at(unit).busy_total; }
  const std::vector<BusyInterval>& unit_intervals(std::size_t unit) const {
    return units_.at(unit).intervals;
  }
  /// Raw bit error rate drawn for (lun, plane).
  double plane_ber(std::uint32_t lun, std::uint32_t plane) const;

  /// One JSON object per processed event (empty unless record_events).
  std::string event_log_jsonl() const;

 private:
  enum class EventKind : std::uint8_t { Arrive, Stage, Finish };
  struct Event {
    SimTime time;
    std::uint64_t seq;
    EventKind kind;
    CommandId cmd;
    std::uint32_t plane;
    std::uint32_t stage;
    bool operator>(const Event& o) const {
      return time > o.time || (time == o.time && seq > o.seq);
    }
  };
  struct Command {
    SearchPageCmd cmd;
    CommandStatus status;
    std::uint32_t unit = 0;
    std::uint32_t planes_pending = 0;  // planes still working
    std::uint32_t planes_held = 0;     // planes still holding the unit
  };
  struct Unit {
    std::queue<CommandId> normal;
    std::queue<CommandId> speculative;
    std::optional<CommandId> running;
    SimTime busy_since{};
    SimDuration busy_total{};
    std::vector<BusyInterval> intervals;
  };
  struct Latch {
    bool valid = false;
    std::uint32_t block = 0;
    std::uint32_t page = 0;
  };
  // Single-server FIFO or multi-server pool with earliest-free dispatch.
  struct Pool {
    std::vector<SimTime> free_at;
    SimTime reserve(SimTime now, SimDuration d);
  };
  enum class Stage : std::uint8_t { Read, Decode, Mac, ChipBus, ChannelBus, Pcie, Release, Done };

  void schedule(SimTime t, EventKind kind, CommandId cmd, std::uint32_t plane, std::uint32_t stage);
  void process(const Event& e);
  void start_next(std::uint32_t unit, SimTime t);
  void release_unit(std::uint32_t unit, SimTime t);
  void advance(CommandId id, std::uint32_t plane, std::uint32_t stage, SimTime t);
  void plane_finished(CommandId id, SimTime t);
  void finish(CommandId id, SimTime t);
  void cancel_running(std::uint32_t unit, SimTime t);
  bool hard_decode_fails(std::uint32_t lun, std::uint32_t plane);
  void log(SimTime t, std::string_view what, CommandId cmd, std::int64_t plane = -1);

  SsdGeometry geometry_;
  TimingConfig timing_;
  SimOptions options_;
  std::vector<Stage> pipeline_;

  SimDuration t_read_, t_xfer_, t_mac_, t_soft_, t_pcie_page_;

  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t seq_ = 0;
  SimTime now_{};
  std::deque<Command> commands_;
  CommandId first_id_ = 0;
  std::vector<Unit> units_;
  std::vector<Latch> latches_;
  std::vector<std::uint64_t> plane_reads_;
  std::vector<double> plane_ber_;
  std::vector<std::uint32_t> block_reads_;
  std::vector<BlockRef> hot_blocks_;
  std::vector<CommandId> live_speculative_;
  std::uint64_t normal_pending_ = 0;
  SimTime last_normal_finish_{};

  std::vector<Pool> chip_bus_, channel_bus_, chip_accel_, channel_accel_;
  Pool pcie_, host_pool_, soft_pool_;

  SimCounters counters_;
  Charges charges_;
  std::vector<std::string> log_;
};

}  // namespace ndsim
