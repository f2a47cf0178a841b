#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ndsim/graph.hpp"
#include "ndsim/ndp.hpp"
#include "ndsim/vecdata.hpp"

namespace ndsim {

struct WorkloadSpec {
  /// Synthetic base set; ignored when `base_path` is set.
  GaussianMixtureSpec synthetic;
  std::string base_path;   // fvecs or bvecs, chosen by extension
  std::string query_path;  // optional; otherwise queries are synthesized
  std::uint32_t query_count = 2048;
  std::uint32_t max_degree = 16;
  std::uint32_t ef_construction = 48;
  DistanceKind kind = DistanceKind::SquaredL2;
  std::uint64_t seed = 1;
};

struct Workload {
  VectorSet base;
  VectorSet queries;
  std::vector<VertexId> entries;  // one random entry vertex per query
};

/// Base and query vectors plus per-query entries. Synthetic queries come from
/// the same mixture as the base set; with a base file but no query file,
/// queries are copies of uniformly chosen base rows.
Workload make_workload(const WorkloadSpec& spec);
Graph build_workload_graph(const Workload& workload, const WorkloadSpec& spec);

/// Uniform entry vertices, reproducible from `seed`.
std::vector<VertexId> random_entries(std::size_t count, std::size_t n, std::uint64_t seed);

/// First `count` queries (cycling when count exceeds the workload).
Workload take_queries(const Workload& workload, std::size_t count);

/// Queries clustered around `targets` distinct base rows: each query is its
/// target row plus Gaussian noise of `spread`, and queries of one target
/// share an entry vertex.
Workload clustered_queries(const Workload& workload, std::size_t targets, std::size_t count,
                           float spread, std::uint64_t seed);

struct LatticeSpec {
  std::size_t count = 100'000;
  std::size_t dim = 96;
  std::uint32_t degree = 16;  // even
  std::size_t query_count = 256;
  std::uint32_t entry_span = 200;  // entries lie within this many positions of the target
  std::uint64_t seed = 1;
};

struct CraftedWorkload {
  Workload workload;
  Graph graph;
};

/// Vertex i sits at coordinate i on the first axis and the graph is a ring
/// lattice, so a search walks the line and the unvisited neighbors of each
/// next expansion are second-order neighbors of the current one.
CraftedWorkload make_lattice_workload(const LatticeSpec& spec);

struct RatioSummary {
  double ratio = 0.0;
  /// Queries left out because their trace was empty.
  std::size_t excluded = 0;
};

/// Batch mean of attributed page reads over trace length.
RatioSummary page_access_ratio(std::span<const double> page_reads,
                               std::span<const std::size_t> trace_lengths);
RatioSummary page_access_ratio(const BatchResult& result);

/// FNV-1a digest over every query's top-k IDs and distance bits.
std::uint64_t topk_digest(const BatchResult& result);

struct EngineConfig {
  SsdGeometry geometry;
  NdpConfig ndp;
  bool reorder = true;
  PlacementMode placement = PlacementMode::MultiPlane;
  /// Parallel workers for independent grid points; 0 uses the hardware count.
  std::uint32_t workers = 0;
};

struct PointReport {
  std::string label;
  bool reorder = false;
  bool multiplane = false;
  bool da = false;
  bool sp = false;
  AccelLevel level = AccelLevel::Lun;
  std::size_t batch = 0;
  double p_hard_fail = 0.0;
  double beta = 0.0;
  double page_access_ratio = 0.0;
  std::uint64_t page_reads = 0;
  std::uint64_t page_accesses = 0;
  std::uint64_t buffer_hits = 0;
  std::uint64_t reused = 0;
  std::uint64_t ecc_soft_events = 0;
  double makespan_us = 0.0;
  double qps = 0.0;
  double mean_latency_us = 0.0;
  std::map<std::string, double> breakdown;
  std::uint64_t topk_digest = 0;
};

struct ExperimentReport {
  std::string experiment;
  std::string config_json;  // echo of the configuration that produced it
  std::vector<PointReport> points;
  /// Named comparisons, e.g. "da_page_read_reduction" or "slowdown_p0.3".
  std::map<std::string, double> ratios;
  /// Whether every point returned the same top-k lists.
  bool topk_identical = true;
};

/// Five rows: bare, re, re+mp, re+mp+da, re+mp+da+sp.
ExperimentReport ablation(const Workload& workload, const Graph& graph, const EngineConfig& config);
/// One row per failure probability; a p = 0 baseline is always included.
ExperimentReport ecc_sweep(const Workload& workload, const Graph& graph, const EngineConfig& config,
                           std::vector<double> probabilities);
/// Rows for every (size, level) pair.
ExperimentReport batch_sweep(const Workload& workload, const Graph& graph,
                             const EngineConfig& config, const std::vector<std::uint32_t>& sizes,
                             const std::vector<AccelLevel>& levels = {AccelLevel::Lun,
                                                                      AccelLevel::Chip});

std::string to_json(const ExperimentReport& report);
std::string to_csv(const ExperimentReport& report);

}  // namespace ndsim
