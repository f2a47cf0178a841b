#include "ndsim/ssdsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "ndsim/error.hpp"

namespace ndsim {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::size_t index_of(ChargeCategory c) { return static_cast<std::size_t>(c); }

}  // namespace

SimDuration from_us(double microseconds) {
  return SimDuration(static_cast<std::int64_t>(std::llround(microseconds * 1e6)));
}

double to_us(SimDuration d) noexcept { return static_cast<double>(d.count()) * 1e-6; }

void TimingConfig::validate() const {
  const std::pair<const char*, double> durations[] = {
      {"t_page_read_us", t_page_read_us},       {"t_chip_bus_xfer_us", t_chip_bus_xfer_us},
      {"t_mac_per_vector_us", t_mac_per_vector_us}, {"t_dram_access_us", t_dram_access_us},
      {"t_core_op_us", t_core_op_us},           {"t_pcie_per_kb_us", t_pcie_per_kb_us},
      {"t_soft_ldpc_us", t_soft_ldpc_us},       {"t_sort_base_us", t_sort_base_us},
      {"t_sort_per_item_us", t_sort_per_item_us}};
  for (const auto& [name, value] : durations) {
    if (!(value >= 0.0) || !std::isfinite(value)) {
      throw Error(ErrorKind::Config, std::string(name) + " must be a non-negative duration");
    }
  }
  if (dram_parallelism == 0) throw Error(ErrorKind::Config, "dram_parallelism must be positive");
  if (embedded_cores == 0) throw Error(ErrorKind::Config, "embedded_cores must be positive");
  if (host_threads == 0) throw Error(ErrorKind::Config, "host_threads must be positive");
}

std::string_view to_string(AccelLevel level) noexcept {
  switch (level) {
    case AccelLevel::Lun: return "lun";
    case AccelLevel::Chip: return "chip";
    case AccelLevel::Channel: return "channel";
    case AccelLevel::Host: return "host";
  }
  return "?";
}

AccelLevel accel_level_from_name(std::string_view name) {
  for (auto level : {AccelLevel::Lun, AccelLevel::Chip, AccelLevel::Channel, AccelLevel::Host}) {
    if (name == to_string(level)) return level;
  }
  throw Error(ErrorKind::Config, "unknown accelerator level '" + std::string(name) +
                                     "' (expected lun, chip, channel or host)");
}

std::string_view to_string(MultiplaneViolation violation) noexcept {
  switch (violation) {
    case MultiplaneViolation::None: return "ok";
    case MultiplaneViolation::NoPlanes: return "command shall target at least one plane";
    case MultiplaneViolation::PlanesNotDistinct: return "plane address bits shall be distinct";
    case MultiplaneViolation::AddressMismatch: return "page/LUN address shall be the same";
  }
  return "?";
}

MultiplaneViolation validate_multiplane(const SearchPageCmd& cmd) noexcept {
  if (cmd.planes.empty()) return MultiplaneViolation::NoPlanes;
  for (std::size_t i = 0; i < cmd.planes.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (cmd.planes[i].plane == cmd.planes[j].plane) return MultiplaneViolation::PlanesNotDistinct;
    }
  }
  for (const auto& target : cmd.planes) {
    if (target.page != cmd.planes.front().page) return MultiplaneViolation::AddressMismatch;
  }
  return MultiplaneViolation::None;
}

std::string_view to_string(ChargeCategory category) noexcept {
  switch (category) {
    case ChargeCategory::NandRead: return "nand_read";
    case ChargeCategory::Dram: return "dram";
    case ChargeCategory::Core: return "core";
    case ChargeCategory::Bus: return "bus";
    case ChargeCategory::Pcie: return "pcie";
    case ChargeCategory::Sort: return "sort";
  }
  return "?";
}

Charges& Charges::operator+=(const Charges& other) {
  for (std::size_t i = 0; i < kChargeCategories; ++i) total[i] += other.total[i];
  return *this;
}

std::map<std::string, std::uint64_t> SimCounters::as_map() const {
  return {{"page_accesses", page_accesses},
          {"page_reads", page_reads},
          {"buffer_hits", buffer_hits},
          {"ecc_soft_events", ecc_soft_events},
          {"commands", commands},
          {"multiplane_commands", multiplane_commands},
          {"spec_submitted", spec_submitted},
          {"spec_completed", spec_completed},
          {"spec_aborted", spec_aborted}};
}

SimCounters& SimCounters::operator+=(const SimCounters& o) {
  page_accesses += o.page_accesses;
  page_reads += o.page_reads;
  buffer_hits += o.buffer_hits;
  ecc_soft_events += o.ecc_soft_events;
  commands += o.commands;
  multiplane_commands += o.multiplane_commands;
  spec_submitted += o.spec_submitted;
  spec_completed += o.spec_completed;
  spec_aborted += o.spec_aborted;
  return *this;
}

SimTime SsdSim::Pool::reserve(SimTime now, SimDuration d) {
  if (free_at.empty()) return now + d;
  auto it = std::min_element(free_at.begin(), free_at.end());
  const SimTime start = std::max(now, *it);
  *it = start + d;
  return *it;
}

SsdSim::SsdSim(const SsdGeometry& geometry, const TimingConfig& timing, const SimOptions& options)
    : geometry_(geometry), timing_(timing), options_(options) {
  geometry_.validate();
  timing_.validate();
  if (!(options_.ecc.p_hard_fail >= 0.0 && options_.ecc.p_hard_fail <= 1.0)) {
    throw Error(ErrorKind::Config, "hard-decision failure probability must lie in [0, 1]");
  }
  t_read_ = from_us(timing_.t_page_read_us);
  t_xfer_ = from_us(timing_.t_chip_bus_xfer_us);
  t_mac_ = from_us(timing_.t_mac_per_vector_us);
  t_soft_ = from_us(timing_.t_soft_ldpc_us);
  t_pcie_page_ = from_us(timing_.t_pcie_per_kb_us * geometry_.page_bytes / 1024.0);

  switch (options_.level) {
    case AccelLevel::Lun:
      pipeline_ = {Stage::Read, Stage::Decode, Stage::Mac, Stage::Release, Stage::Done};
      break;
    case AccelLevel::Chip:
      pipeline_ = {Stage::Read, Stage::Decode, Stage::Release, Stage::ChipBus, Stage::Mac,
                   Stage::Done};
      break;
    case AccelLevel::Channel:
      pipeline_ = {Stage::Read, Stage::Decode, Stage::Release, Stage::ChannelBus, Stage::Mac,
                   Stage::Done};
      break;
    case AccelLevel::Host:
      pipeline_ = {Stage::Read, Stage::Decode, Stage::Release, Stage::ChannelBus, Stage::Pcie,
                   Stage::Mac, Stage::Done};
      break;
  }

  const std::uint32_t luns = geometry_.total_luns();
  const std::size_t planes = static_cast<std::size_t>(luns) * geometry_.planes_per_lun;
  units_.resize(options_.serialize_luns ? geometry_.total_chips() : luns);
  latches_.resize(planes);
  plane_reads_.assign(planes, 0);
  block_reads_.assign(static_cast<std::size_t>(luns) * geometry_.blocks_per_lun(), 0);

  std::mt19937_64 rng(options_.ecc.seed);
  const double sigma = options_.ecc.ber_log_sigma;
  const double mean = std::max(options_.ecc.ber_mean, 1e-300);
  std::lognormal_distribution<double> ber(std::log(mean) - sigma * sigma / 2.0, sigma);
  plane_ber_.resize(planes);
  for (auto& b : plane_ber_) b = ber(rng);

  chip_bus_.assign(geometry_.total_chips(), Pool{{SimTime{}}});
  chip_accel_.assign(geometry_.total_chips(), Pool{{SimTime{}}});
  channel_bus_.assign(geometry_.channels, Pool{{SimTime{}}});
  channel_accel_.assign(geometry_.channels, Pool{{SimTime{}}});
  pcie_ = Pool{{SimTime{}}};
  host_pool_ = Pool{std::vector<SimTime>(timing_.host_threads)};
  soft_pool_ = Pool{std::vector<SimTime>(timing_.soft_decoders)};
}

CommandId SsdSim::submit(const SearchPageCmd& cmd, SimTime at, Priority priority) {
  if (cmd.lun >= geometry_.total_luns()) {
    throw Error(ErrorKind::Simulation, "command references unknown LUN " + std::to_string(cmd.lun));
  }
  if (const auto v = validate_multiplane(cmd); v != MultiplaneViolation::None) {
    throw Error(ErrorKind::Simulation, "command rejected: " + std::string(to_string(v)));
  }
  for (const auto& t : cmd.planes) {
    if (t.plane >= geometry_.planes_per_lun || t.block >= geometry_.blocks_per_plane ||
        t.page >= geometry_.pages_per_block) {
      throw Error(ErrorKind::Simulation, "command address outside the geometry");
    }
  }
  if (at < now_) throw Error(ErrorKind::Simulation, "command submitted in the past");

  const CommandId id = next_id();
  Command c;
  c.cmd = cmd;
  c.status.priority = priority;
  c.status.submitted = at;
  c.status.plane_read.assign(cmd.planes.size(), 0);
  c.unit = options_.serialize_luns ? geometry_.chip_of(cmd.lun) : cmd.lun;
  commands_.push_back(std::move(c));
  if (priority == Priority::Normal) {
    ++normal_pending_;
  } else {
    ++counters_.spec_submitted;
    live_speculative_.push_back(id);
  }
  schedule(at, EventKind::Arrive, id, 0, 0);
  return id;
}

void SsdSim::retire(CommandId upto) {
  while (first_id_ < upto && !commands_.empty()) {
    const CommandState state = commands_.front().status.state;
    if (state != CommandState::Done && state != CommandState::Aborted) {
      throw Error(ErrorKind::Simulation, "retiring command " + std::to_string(first_id_) +
                                             " before it finished");
    }
    commands_.pop_front();
    ++first_id_;
  }
}

void SsdSim::schedule(SimTime t, EventKind kind, CommandId cmd, std::uint32_t plane,
                      std::uint32_t stage) {
  events_.push(Event{t, seq_++, kind, cmd, plane, stage});
}

SimTime SsdSim::drain_normal() {
  if (normal_pending_ == 0) return now_;
  while (normal_pending_ > 0) {
    if (events_.empty()) {
      throw Error(ErrorKind::Simulation, "event queue drained with normal commands outstanding");
    }
    const Event e = events_.top();
    events_.pop();
    now_ = e.time;
    process(e);
  }
  return last_normal_finish_;
}

void SsdSim::run_until(SimTime t) {
  while (!events_.empty() && events_.top().time <= t) {
    const Event e = events_.top();
    events_.pop();
    now_ = e.time;
    process(e);
  }
  now_ = std::max(now_, t);
}

void SsdSim::abort_speculative(SimTime t) {
  run_until(t);
  for (Unit& unit : units_) unit.speculative = {};
  std::vector<std::uint32_t> freed;
  for (CommandId id : live_speculative_) {
    Command& c = commands_[id - first_id_];
    if (c.status.state == CommandState::Done || c.status.state == CommandState::Aborted) continue;
    if (units_[c.unit].running == id) {
      cancel_running(c.unit, t);
      freed.push_back(c.unit);
      continue;
    }
    // Queued, or past its Release stage with the unit already handed on.
    c.status.state = CommandState::Aborted;
    c.status.finished = t;
    ++counters_.spec_aborted;
    log(t, "abort", id);
  }
  live_speculative_.clear();
  for (std::uint32_t unit : freed) start_next(unit, t);
}

void SsdSim::cancel_running(std::uint32_t unit_id, SimTime t) {
  Unit& unit = units_[unit_id];
  const CommandId id = *unit.running;
  Command& c = commands_[id - first_id_];
  c.status.state = CommandState::Aborted;
  c.status.finished = t;
  ++counters_.spec_aborted;
  log(t, "abort", id);
  release_unit(unit_id, t);
}

void SsdSim::process(const Event& e) {
  if (e.cmd < first_id_) return;  // retired after an abort
  Command& c = commands_[e.cmd - first_id_];
  if (c.status.state == CommandState::Aborted) return;
  switch (e.kind) {
    case EventKind::Arrive: {
      Unit& unit = units_[c.unit];
      if (c.status.priority == Priority::Normal) {
        unit.normal.push(e.cmd);
        if (unit.running &&
            commands_[*unit.running - first_id_].status.priority == Priority::Speculative) {
          cancel_running(c.unit, e.time);
        }
      } else {
        unit.speculative.push(e.cmd);
      }
      start_next(c.unit, e.time);
      break;
    }
    case EventKind::Stage:
      advance(e.cmd, e.plane, e.stage, e.time);
      break;
    case EventKind::Finish:
      finish(e.cmd, e.time);
      break;
  }
}

void SsdSim::start_next(std::uint32_t unit_id, SimTime t) {
  Unit& unit = units_[unit_id];
  if (unit.running) return;
  auto pop_live = [&](std::queue<CommandId>& q) -> std::optional<CommandId> {
    while (!q.empty()) {
      const CommandId id = q.front();
      q.pop();
      if (commands_[id - first_id_].status.state == CommandState::Queued) return id;
    }
    return std::nullopt;
  };
  std::optional<CommandId> next = pop_live(unit.normal);
  if (!next) next = pop_live(unit.speculative);
  if (!next) return;

  const CommandId id = *next;
  Command& c = commands_[id - first_id_];
  c.status.state = CommandState::Running;
  c.status.started = t;
  unit.running = id;
  unit.busy_since = t;
  const auto planes = static_cast<std::uint32_t>(c.cmd.planes.size());
  c.planes_pending = planes;
  c.planes_held = planes;
  ++counters_.commands;
  if (planes > 1) ++counters_.multiplane_commands;
  counters_.page_accesses += planes;
  log(t, "start", id);
  for (std::uint32_t p = 0; p < planes; ++p) advance(id, p, 0, t);
}

void SsdSim::release_unit(std::uint32_t unit_id, SimTime t) {
  Unit& unit = units_[unit_id];
  unit.busy_total += t - unit.busy_since;
  if (options_.record_busy_intervals) unit.intervals.push_back({unit.busy_since, t});
  unit.running.reset();
}

bool SsdSim::hard_decode_fails(std::uint32_t lun, std::uint32_t plane) {
  const std::size_t key = static_cast<std::size_t>(lun) * geometry_.planes_per_lun + plane;
  const std::uint64_t h = splitmix64(options_.ecc.seed ^ splitmix64(key) ^
                                     splitmix64(plane_reads_[key]++ ^ 0x5bd1e995ULL));
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < options_.ecc.p_hard_fail;
}

void SsdSim::advance(CommandId id, std::uint32_t p, std::uint32_t stage, SimTime t) {
  Command& c = commands_[id - first_id_];
  const std::uint32_t lun = c.cmd.lun;
  const PlaneTarget& target = c.cmd.planes[p];
  const std::size_t latch_key = static_cast<std::size_t>(lun) * geometry_.planes_per_lun + target.plane;
  for (;; ++stage) {
    switch (pipeline_[stage]) {
      case Stage::Read: {
        const Latch& latch = latches_[latch_key];
        if (latch.valid && latch.block == target.block && latch.page == target.page) {
          ++counters_.buffer_hits;
          continue;
        }
        c.status.plane_read[p] = 1;
        ++counters_.page_reads;
        charges_.add(ChargeCategory::NandRead, t_read_);
        // Speculative reads stage through the cache register and leave the
        // latched page alone, so they never cost a normal command a hit.
        if (c.status.priority == Priority::Normal) latches_[latch_key].valid = false;
        const std::size_t block_key = static_cast<std::size_t>(lun) * geometry_.blocks_per_lun() +
                                      target.plane * geometry_.blocks_per_plane + target.block;
        if (++block_reads_[block_key] == options_.refresh_threshold) {
          hot_blocks_.push_back({lun, target.plane * geometry_.blocks_per_plane + target.block});
        }
        log(t, "read", id, p);
        schedule(t + t_read_, EventKind::Stage, id, p, stage + 1);
        return;
      }
      case Stage::Decode: {
        if (!c.status.plane_read[p]) continue;
        if (c.status.priority == Priority::Normal) {
          latches_[latch_key] = Latch{true, target.block, target.page};
        }
        if (!hard_decode_fails(lun, target.plane)) continue;
        ++counters_.ecc_soft_events;
        charges_.add(ChargeCategory::Core, t_soft_);
        log(t, "soft_decode", id, p);
        schedule(soft_pool_.reserve(t, t_soft_), EventKind::Stage, id, p, stage + 1);
        return;
      }
      case Stage::Mac: {
        const SimDuration d = t_mac_ * target.candidates;
        SimTime end = t + d;
        switch (options_.level) {
          case AccelLevel::Lun:
            charges_.add(ChargeCategory::NandRead, d);
            break;
          case AccelLevel::Chip:
            charges_.add(ChargeCategory::NandRead, d);
            end = chip_accel_[geometry_.chip_of(lun)].reserve(t, d);
            break;
          case AccelLevel::Channel:
            charges_.add(ChargeCategory::NandRead, d);
            end = channel_accel_[geometry_.channel_of(lun)].reserve(t, d);
            break;
          case AccelLevel::Host:
            charges_.add(ChargeCategory::Core, d);
            end = host_pool_.reserve(t, d);
            break;
        }
        schedule(end, EventKind::Stage, id, p, stage + 1);
        return;
      }
      case Stage::ChipBus:
        charges_.add(ChargeCategory::Bus, t_xfer_);
        schedule(chip_bus_[geometry_.chip_of(lun)].reserve(t, t_xfer_), EventKind::Stage, id, p,
                 stage + 1);
        return;
      case Stage::ChannelBus:
        charges_.add(ChargeCategory::Bus, t_xfer_);
        schedule(channel_bus_[geometry_.channel_of(lun)].reserve(t, t_xfer_), EventKind::Stage, id,
                 p, stage + 1);
        return;
      case Stage::Pcie:
        charges_.add(ChargeCategory::Pcie, t_pcie_page_);
        schedule(pcie_.reserve(t, t_pcie_page_), EventKind::Stage, id, p, stage + 1);
        return;
      case Stage::Release:
        if (--c.planes_held == 0) {
          release_unit(c.unit, t);
          start_next(c.unit, t);
        }
        continue;
      case Stage::Done:
        plane_finished(id, t);
        return;
    }
  }
}

void SsdSim::plane_finished(CommandId id, SimTime t) {
  Command& c = commands_[id - first_id_];
  if (--c.planes_pending > 0) return;
  if (options_.level == AccelLevel::Lun || options_.level == AccelLevel::Chip) {
    // Only distances and IDs leave the accelerator.
    std::uint64_t candidates = 0;
    for (const auto& target : c.cmd.planes) candidates += target.candidates;
    const SimDuration d = SimDuration(t_xfer_.count() * static_cast<std::int64_t>(candidates * 8) /
                                      geometry_.page_bytes);
    charges_.add(ChargeCategory::Bus, d);
    schedule(channel_bus_[geometry_.channel_of(c.cmd.lun)].reserve(t, d), EventKind::Finish, id,
             0, 0);
    return;
  }
  finish(id, t);
}

void SsdSim::finish(CommandId id, SimTime t) {
  Command& c = commands_[id - first_id_];
  c.status.state = CommandState::Done;
  c.status.finished = t;
  log(t, "done", id);
  if (c.status.priority == Priority::Normal) {
    --normal_pending_;
    last_normal_finish_ = t;
  } else {
    ++counters_.spec_completed;
  }
}

bool SsdSim::latched(std::uint32_t lun, const PlaneTarget& target) const {
  const Latch& latch =
      latches_.at(static_cast<std::size_t>(lun) * geometry_.planes_per_lun + target.plane);
  return latch.valid && latch.block == target.block && latch.page == target.page;
}

void SsdSim::invalidate_latch(std::uint32_t lun, std::uint32_t plane) {
  latches_.at(static_cast<std::size_t>(lun) * geometry_.planes_per_lun + plane).valid = false;
}

std::vector<BlockRef> SsdSim::take_hot_blocks() {
  std::vector<BlockRef> out;
  out.swap(hot_blocks_);
  for (const auto& b : out) {
    block_reads_[static_cast<std::size_t>(b.lun) * geometry_.blocks_per_lun() + b.block] = 0;
  }
  return out;
}

std::uint64_t SsdSim::block_reads(std::uint32_t lun, std::uint32_t block) const {
  return block_reads_.at(static_cast<std::size_t>(lun) * geometry_.blocks_per_lun() + block);
}

double SsdSim::plane_ber(std::uint32_t lun, std::uint32_t plane) const {
  return plane_ber_.at(static_cast<std::size_t>(lun) * geometry_.planes_per_lun + plane);
}

void SsdSim::log(SimTime t, std::string_view what, CommandId cmd, std::int64_t plane) {
  if (!options_.record_events) return;
  std::ostringstream line;
  line << "{\"t_ps\":" << t.count() << ",\"event\":\"" << what << "\",\"cmd\":" << cmd
       << ",\"lun\":" << commands_[cmd - first_id_].cmd.lun;
  if (plane >= 0) line << ",\"plane\":" << commands_[cmd - first_id_].cmd.planes[plane].plane;
  line << "}";
  log_.push_back(line.str());
}

std::string SsdSim::event_log_jsonl() const {
  std::string out;
  for (const auto& line : log_) {
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace ndsim
