#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ndsim/graph.hpp"
#include "ndsim/luncsr.hpp"
#include "ndsim/reorder.hpp"
#include "ndsim/ssdsim.hpp"
#include "ndsim/vecdata.hpp"

namespace ndsim {

/// Storage-side view of a graph: the LUNCSR in storage order plus the
/// permutation back to the IDs the caller uses.
struct Layout {
  Luncsr luncsr;
  Ordering to_storage;   // original ID -> storage ID
  Ordering to_original;  // storage ID -> original ID
};

/// Optionally relabels `graph` by degree-ascending BFS, then places it.
Layout make_layout(const Graph& graph, std::size_t record_bytes, const SsdGeometry& geometry,
                   bool reorder, PlacementMode mode);

/// Search state of one query (one row of the query property table). Works
/// in the caller's ID space so that tie-breaking by ID matches beam_search.
class QueryState {
 public:
  using NeighborFn = std::function<void(VertexId, std::vector<VertexId>&)>;

  QueryState(std::size_t n, std::uint32_t ef, std::uint64_t query_id);

  /// Seeds the search: the entry is the only vertex to evaluate.
  void start(VertexId entry);
  bool active() const noexcept { return active_; }
  /// Vertices whose distance the next searching stage must supply.
  const std::vector<VertexId>& pending() const noexcept { return pending_; }
  /// Vertex whose neighbors are pending; absent before the first expansion.
  std::optional<VertexId> expanded() const noexcept { return expanded_; }
  bool visited(VertexId v) const { return (visited_[v >> 6] >> (v & 63)) & 1; }

  /// Merges this iteration's distances (one per pending vertex, any order),
  /// then pops candidates until one has unvisited neighbors or the search
  /// terminates. Returns the number of candidates popped.
  std::uint32_t gather(std::vector<Neighbor> distances, const NeighborFn& neighbors_of);

  /// Result list, ascending by (distance, ID).
  std::vector<Neighbor> results() const;
  const SearchTrace& trace() const noexcept { return trace_; }

 private:
  bool mark(VertexId v);

  std::uint32_t ef_;
  SearchTrace trace_;
  std::vector<std::uint64_t> visited_;
  std::vector<Neighbor> candidates_;  // min-heap
  std::vector<Neighbor> results_;     // max-heap
  std::vector<VertexId> pending_;
  std::optional<VertexId> expanded_;
  bool active_ = false;
};

struct WorkItem {
  std::uint32_t query = 0;
  VertexId vertex = 0;  // storage ID

  friend bool operator==(const WorkItem&, const WorkItem&) = default;
};

struct QueryWork {
  std::uint32_t query = 0;
  std::vector<VertexId> vertices;  // storage IDs
};

struct LunWork {
  std::uint32_t lun = 0;
  std::vector<WorkItem> items;
};

/// Work grouped by LUN (ascending), items in query order within a LUN.
using LunWorklist = std::vector<LunWork>;

LunWorklist allocate_batch(std::span<const QueryWork> work, const Luncsr& luncsr);

/// A search-page command and the (query, vertex) pairs each plane serves.
struct PlannedCommand {
  SearchPageCmd cmd;
  std::vector<std::vector<WorkItem>> items;  // parallel to cmd.planes
};

/// Turns work into multi-plane legal commands. With `batch_wise` all queries
/// targeting a LUN are merged and shared pages are read once, latched pages
/// first; otherwise each query gets its own commands in arrival order.
std::vector<PlannedCommand> plan_commands(
    std::span<const QueryWork> work, const Luncsr& luncsr, bool batch_wise, DistanceKind kind,
    const std::function<bool(std::uint32_t lun, const PlaneTarget&)>& latched = {});

struct Preference {
  VertexId vertex = 0;
  std::uint32_t score = 0;  // first-order neighbors adjacent to `vertex`

  friend bool operator==(const Preference&, const Preference&) = default;
};

/// Second-order neighbors of `entry` ranked by how many first-order
/// neighbors they touch (ties to the smaller ID); at most `limit` returned.
std::vector<Preference> second_order_preference(const Graph& graph, VertexId entry,
                                                std::uint32_t limit);

/// Removes from `pending` every vertex with a precomputed distance in
/// `ready`, moving those distances to `reused`. Returns the reuse count.
std::size_t merge_speculation(std::vector<VertexId>& pending,
                              const std::map<VertexId, float>& ready,
                              std::vector<Neighbor>& reused);

/// Bitonic network over the list padded to a power of two with +inf
/// sentinels; ascending by (distance, ID).
std::vector<Neighbor> bitonic_sort(std::vector<Neighbor> list);
/// First k of bitonic_sort. Throws ErrorKind::Parameter when k == 0.
std::vector<Neighbor> bitonic_topk(std::vector<Neighbor> list, std::uint32_t k);
std::size_t padded_length(std::size_t n) noexcept;

struct NdpConfig {
  std::uint32_t ef = 32;
  std::uint32_t k = 10;
  DistanceKind kind = DistanceKind::SquaredL2;
  bool dynamic_allocation = true;
  bool speculation = false;
  AccelLevel level = AccelLevel::Lun;
  bool serialize_luns = false;
  std::uint32_t max_batch_per_pass = 2048;
  /// Second-order neighbors prefetched per entry; 0 means the entry's degree.
  std::uint32_t speculation_limit = 0;
  std::uint32_t refresh_threshold = 10000;
  std::uint64_t refresh_seed = 1;
  TimingConfig timing;
  EccModel ecc;
  bool record_events = false;
};

struct QueryOutcome {
  std::uint64_t query_id = 0;
  VertexId entry = 0;
  bool faulted = false;
  std::string fault;
  bool k_clamped = false;
  std::vector<Neighbor> topk;  // caller IDs
  SearchTrace trace;           // caller IDs
  /// Page reads attributed to this query; shared reads are split evenly.
  double page_reads = 0.0;
  std::uint32_t pass = 0;
  double latency_us = 0.0;
};

struct BatchCounters {
  SimCounters sim;
  std::uint64_t reused = 0;
  std::uint64_t speculated = 0;
  std::uint64_t refreshes = 0;
  std::uint64_t passes = 0;
  std::uint64_t iterations = 0;
  std::uint64_t faulted = 0;
};

struct BatchResult {
  std::vector<QueryOutcome> queries;
  BatchCounters counters;
  Charges charges;
  double makespan_us = 0.0;
  double qps = 0.0;
  std::string event_log;  // JSON lines when NdpConfig::record_events

  /// Charge fractions keyed nand_read, dram, core, bus, pcie, sort.
  std::map<std::string, double> breakdown() const;
};

/// Runs the allocate / search / gather loop for a batch of queries and the
/// final top-k sort. `entries` are caller IDs, one per query.
BatchResult run_batch(const Layout& layout, const VectorSet& base, const VectorSet& queries,
                      std::span<const VertexId> entries, const NdpConfig& config);

/// Compact JSON: results, counters, breakdown, makespan_us, qps.
std::string to_json(const BatchResult& result);

}  // namespace ndsim
