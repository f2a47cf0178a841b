#include "ndsim/engine.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

namespace ndsim {

namespace {

using nlohmann::ordered_json;

VecFileFormat format_for(const std::string& path) {
  return std::filesystem::path(path).extension() == ".bvecs" ? VecFileFormat::Bvecs
                                                             : VecFileFormat::Fvecs;
}

std::vector<std::uint32_t> iota_rows(std::size_t begin, std::size_t end) {
  std::vector<std::uint32_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), static_cast<std::uint32_t>(begin));
  return rows;
}

struct LayoutKey {
  bool reorder;
  PlacementMode mode;
  auto operator<=>(const LayoutKey&) const = default;
};

struct PointSpec {
  PointReport meta;
  LayoutKey layout;
  NdpConfig ndp;
  const Workload* queries;
};

PointReport summarize(PointReport meta, const BatchResult& r, double beta) {
  meta.beta = beta;
  meta.page_access_ratio = page_access_ratio(r).ratio;
  meta.page_reads = r.counters.sim.page_reads;
  meta.page_accesses = r.counters.sim.page_accesses;
  meta.buffer_hits = r.counters.sim.buffer_hits;
  meta.reused = r.counters.reused;
  meta.ecc_soft_events = r.counters.sim.ecc_soft_events;
  meta.makespan_us = r.makespan_us;
  meta.qps = r.qps;
  double latency = 0.0;
  std::size_t counted = 0;
  for (const auto& q : r.queries) {
    if (q.faulted) continue;
    latency += q.latency_us;
    ++counted;
  }
  meta.mean_latency_us = counted ? latency / static_cast<double>(counted) : 0.0;
  meta.breakdown = r.breakdown();
  meta.topk_digest = topk_digest(r);
  return meta;
}

// Builds each distinct layout once, then runs the points on worker threads.
std::vector<PointReport> run_points(const Graph& graph, const Workload& workload,
                                    const EngineConfig& config,
                                    const std::vector<PointSpec>& points) {
  std::map<LayoutKey, Layout> layouts;
  std::map<LayoutKey, double> betas;
  for (const auto& p : points) {
    if (layouts.contains(p.layout)) continue;
    Layout layout = make_layout(graph, workload.base.record_bytes(), config.geometry,
                                p.layout.reorder, p.layout.mode);
    betas[p.layout] = bandwidth(graph, layout.to_storage);
    layouts.emplace(p.layout, std::move(layout));
  }

  std::vector<PointReport> out(points.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        const PointSpec& p = points[i];
        const BatchResult r = run_batch(layouts.at(p.layout), workload.base, p.queries->queries,
                                        p.queries->entries, p.ndp);
        out[i] = summarize(p.meta, r, betas.at(p.layout));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::size_t workers = config.workers ? config.workers : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, points.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

bool all_digests_equal(const std::vector<PointReport>& points) {
  return std::all_of(points.begin(), points.end(), [&](const PointReport& p) {
    return p.topk_digest == points.front().topk_digest;
  });
}

std::string number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

}  // namespace

Workload make_workload(const WorkloadSpec& spec) {
  Workload w;
  if (spec.base_path.empty()) {
    GaussianMixtureSpec mix = spec.synthetic;
    mix.seed = spec.seed;
    mix.count = spec.synthetic.count + spec.query_count;
    const VectorSet all = make_gaussian_mixture(mix);
    w.base = all.gather(iota_rows(0, spec.synthetic.count));
    w.queries = all.gather(iota_rows(spec.synthetic.count, mix.count));
  } else {
    w.base = load_vectors(spec.base_path, format_for(spec.base_path));
    if (w.base.count() == 0) {
      throw Error(ErrorKind::Format, "base vector file " + spec.base_path + " holds no vectors");
    }
    if (!spec.query_path.empty()) {
      w.queries = load_vectors(spec.query_path, format_for(spec.query_path));
      if (w.queries.dim() != w.base.dim()) {
        throw Error(ErrorKind::Dimension, "query file dimension " +
                                              std::to_string(w.queries.dim()) +
                                              " differs from base dimension " +
                                              std::to_string(w.base.dim()));
      }
    } else {
      std::mt19937_64 rng(spec.seed + 2);
      std::uniform_int_distribution<std::uint32_t> pick(
          0, static_cast<std::uint32_t>(w.base.count() - 1));
      std::vector<std::uint32_t> rows(spec.query_count);
      for (auto& r : rows) r = pick(rng);
      w.queries = w.base.gather(rows);
    }
  }
  w.entries = random_entries(w.queries.count(), w.base.count(), spec.seed + 3);
  return w;
}

Graph build_workload_graph(const Workload& workload, const WorkloadSpec& spec) {
  return build_graph(workload.base, spec.max_degree, spec.ef_construction, spec.seed + 1,
                     spec.kind);
}

std::vector<VertexId> random_entries(std::size_t count, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::Parameter, "cannot draw entries from an empty graph");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<VertexId> out(count);
  for (auto& e : out) e = static_cast<VertexId>(pick(rng));
  return out;
}

Workload take_queries(const Workload& workload, std::size_t count) {
  if (workload.queries.count() == 0) throw Error(ErrorKind::Parameter, "workload has no queries");
  std::vector<std::uint32_t> rows(count);
  Workload out;
  out.base = workload.base;
  out.entries.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    rows[i] = static_cast<std::uint32_t>(i % workload.queries.count());
    out.entries[i] = workload.entries[rows[i]];
  }
  out.queries = workload.queries.gather(rows);
  return out;
}

Workload clustered_queries(const Workload& workload, std::size_t targets, std::size_t count,
                           float spread, std::uint64_t seed) {
  const std::size_t n = workload.base.count();
  if (targets == 0 || targets > n) {
    throw Error(ErrorKind::Parameter, "clustered queries need 1 <= targets <= base size");
  }
  if (workload.base.elem() != ElemType::Float32) {
    throw Error(ErrorKind::Parameter, "clustered queries need a float base set");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::uint32_t> chosen(n);
  std::iota(chosen.begin(), chosen.end(), 0u);
  std::shuffle(chosen.begin(), chosen.end(), rng);
  chosen.resize(targets);
  const std::vector<VertexId> target_entries = random_entries(targets, n, seed + 1);

  const std::size_t dim = workload.base.dim();
  std::normal_distribution<float> noise(0.0f, spread);
  std::vector<float> data(count * dim);
  Workload out;
  out.base = workload.base;
  out.entries.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto row = std::get<std::span<const float>>(workload.base.row(chosen[i % targets]));
    for (std::size_t j = 0; j < dim; ++j) data[i * dim + j] = row[j] + noise(rng);
    out.entries[i] = target_entries[i % targets];
  }
  out.queries = VectorSet::from_f32(dim, std::move(data));
  return out;
}

CraftedWorkload make_lattice_workload(const LatticeSpec& spec) {
  if (spec.dim == 0) throw Error(ErrorKind::Parameter, "lattice workload needs dim >= 1");
  if (spec.count < 2 * (static_cast<std::size_t>(spec.entry_span) + spec.degree) + 1) {
    throw Error(ErrorKind::Parameter, "lattice too short for the entry span");
  }
  CraftedWorkload out;
  std::vector<float> base(spec.count * spec.dim, 0.0f);
  for (std::size_t i = 0; i < spec.count; ++i) base[i * spec.dim] = static_cast<float>(i);
  out.workload.base = VectorSet::from_f32(spec.dim, std::move(base));
  out.graph = make_small_world(spec.count, spec.degree, 0.0, spec.seed);

  // Targets stay clear of the ring seam so walks never wrap.
  const std::size_t margin = spec.entry_span + spec.degree;
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<std::size_t> where(margin, spec.count - 1 - margin);
  std::uniform_int_distribution<std::size_t> offset(0, 2 * static_cast<std::size_t>(spec.entry_span));
  std::vector<float> queries(spec.query_count * spec.dim, 0.0f);
  out.workload.entries.resize(spec.query_count);
  for (std::size_t q = 0; q < spec.query_count; ++q) {
    const std::size_t target = where(rng);
    queries[q * spec.dim] = static_cast<float>(target) + 0.25f;
    out.workload.entries[q] = static_cast<VertexId>(target - spec.entry_span + offset(rng));
  }
  out.workload.queries = VectorSet::from_f32(spec.dim, std::move(queries));
  return out;
}

RatioSummary page_access_ratio(std::span<const double> page_reads,
                               std::span<const std::size_t> trace_lengths) {
  if (page_reads.size() != trace_lengths.size()) {
    throw Error(ErrorKind::Parameter, "one trace length per query is required");
  }
  RatioSummary out;
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < page_reads.size(); ++i) {
    if (trace_lengths[i] == 0) {
      ++out.excluded;
      continue;
    }
    sum += page_reads[i] / static_cast<double>(trace_lengths[i]);
    ++counted;
  }
  out.ratio = counted ? sum / static_cast<double>(counted) : 0.0;
  return out;
}

RatioSummary page_access_ratio(const BatchResult& result) {
  std::vector<double> reads;
  std::vector<std::size_t> lengths;
  for (const auto& q : result.queries) {
    if (q.faulted) continue;
    reads.push_back(q.page_reads);
    lengths.push_back(q.trace.visited.size());
  }
  return page_access_ratio(reads, lengths);
}

std::uint64_t topk_digest(const BatchResult& result) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& q : result.queries) {
    mix(q.query_id);
    mix(q.topk.size());
    for (const auto& nb : q.topk) {
      mix(nb.id);
      mix(std::bit_cast<std::uint32_t>(nb.distance));
    }
  }
  return h;
}

ExperimentReport ablation(const Workload& workload, const Graph& graph,
                          const EngineConfig& config) {
  struct Row {
    const char* label;
    bool reorder, multiplane, da, sp;
  };
  const Row rows[] = {{"bare", false, false, false, false},
                      {"re", true, false, false, false},
                      {"re+mp", true, true, false, false},
                      {"re+mp+da", true, true, true, false},
                      {"re+mp+da+sp", true, true, true, true}};
  std::vector<PointSpec> points;
  for (const Row& row : rows) {
    PointSpec p;
    p.meta.label = row.label;
    p.meta.reorder = row.reorder;
    p.meta.multiplane = row.multiplane;
    p.meta.da = row.da;
    p.meta.sp = row.sp;
    p.meta.level = config.ndp.level;
    p.meta.batch = workload.queries.count();
    p.meta.p_hard_fail = config.ndp.ecc.p_hard_fail;
    p.layout = {row.reorder, row.multiplane ? PlacementMode::MultiPlane : PlacementMode::Striped};
    p.ndp = config.ndp;
    p.ndp.dynamic_allocation = row.da;
    p.ndp.speculation = row.sp;
    p.queries = &workload;
    points.push_back(p);
  }
  ExperimentReport report;
  report.experiment = "ablation";
  report.points = run_points(graph, workload, config, points);
  report.topk_identical = all_digests_equal(report.points);
  const auto& pts = report.points;
  report.ratios["page_access_ratio_reduction_re_mp"] =
      pts[0].page_access_ratio > 0 ? 1.0 - pts[2].page_access_ratio / pts[0].page_access_ratio : 0.0;
  report.ratios["page_read_reduction_da"] =
      pts[2].page_reads ? 1.0 - static_cast<double>(pts[3].page_reads) / pts[2].page_reads : 0.0;
  report.ratios["speedup_da"] = pts[3].makespan_us > 0 ? pts[2].makespan_us / pts[3].makespan_us : 0.0;
  report.ratios["speedup_sp"] = pts[4].makespan_us > 0 ? pts[3].makespan_us / pts[4].makespan_us : 0.0;
  report.ratios["speedup_all_vs_bare"] =
      pts[4].makespan_us > 0 ? pts[0].makespan_us / pts[4].makespan_us : 0.0;
  return report;
}

ExperimentReport ecc_sweep(const Workload& workload, const Graph& graph, const EngineConfig& config,
                           std::vector<double> probabilities) {
  if (std::find(probabilities.begin(), probabilities.end(), 0.0) == probabilities.end()) {
    probabilities.insert(probabilities.begin(), 0.0);
  }
  std::vector<PointSpec> points;
  for (double p : probabilities) {
    PointSpec spec;
    spec.meta.label = "p_hd=" + trim_label(p);
    spec.meta.reorder = config.reorder;
    spec.meta.multiplane = config.placement == PlacementMode::MultiPlane;
    spec.meta.da = config.ndp.dynamic_allocation;
    spec.meta.sp = config.ndp.speculation;
    spec.meta.level = config.ndp.level;
    spec.meta.batch = workload.queries.count();
    spec.meta.p_hard_fail = p;
    spec.layout = {config.reorder, config.placement};
    spec.ndp = config.ndp;
    spec.ndp.ecc.p_hard_fail = p;
    spec.queries = &workload;
    points.push_back(spec);
  }
  ExperimentReport report;
  report.experiment = "ecc";
  report.points = run_points(graph, workload, config, points);
  report.topk_identical = all_digests_equal(report.points);
  double baseline = 0.0;
  for (const auto& pt : report.points) {
    if (pt.p_hard_fail == 0.0) baseline = pt.makespan_us;
  }
  for (const auto& pt : report.points) {
    report.ratios["slowdown_p" + trim_label(pt.p_hard_fail)] =
        baseline > 0 ? pt.makespan_us / baseline : 0.0;
  }
  return report;
}

ExperimentReport batch_sweep(const Workload& workload, const Graph& graph,
                             const EngineConfig& config, const std::vector<std::uint32_t>& sizes,
                             const std::vector<AccelLevel>& levels) {
  std::vector<Workload> batches;
  batches.reserve(sizes.size());
  for (auto size : sizes) {
    if (size == 0) throw Error(ErrorKind::Config, "batch sizes must be positive");
    batches.push_back(take_queries(workload, size));
  }
  std::vector<PointSpec> points;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    for (AccelLevel level : levels) {
      PointSpec p;
      p.meta.label = std::string(to_string(level)) + "@" + std::to_string(sizes[s]);
      p.meta.reorder = config.reorder;
      p.meta.multiplane = config.placement == PlacementMode::MultiPlane;
      p.meta.da = config.ndp.dynamic_allocation;
      p.meta.sp = config.ndp.speculation;
      p.meta.level = level;
      p.meta.batch = sizes[s];
      p.meta.p_hard_fail = config.ndp.ecc.p_hard_fail;
      p.layout = {config.reorder, config.placement};
      p.ndp = config.ndp;
      p.ndp.level = level;
      p.queries = &batches[s];
      points.push_back(p);
    }
  }
  ExperimentReport report;
  report.experiment = "batchsweep";
  report.points = run_points(graph, workload, config, points);
  report.topk_identical = true;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const auto* row = &report.points[s * levels.size()];
    for (std::size_t l = 1; l < levels.size(); ++l) {
      if (row[l].topk_digest != row[0].topk_digest) report.topk_identical = false;
      if (row[l].qps > 0) {
        report.ratios[std::string(to_string(levels[0])) + "_over_" +
                      std::string(to_string(levels[l])) + "_qps_b" + std::to_string(sizes[s])] =
            row[0].qps / row[l].qps;
      }
    }
  }
  return report;
}

std::string to_json(const ExperimentReport& report) {
  ordered_json points = ordered_json::array();
  for (const auto& p : report.points) {
    points.push_back({{"label", p.label},
                      {"reorder", p.reorder},
                      {"multiplane", p.multiplane},
                      {"da", p.da},
                      {"sp", p.sp},
                      {"accel", std::string(to_string(p.level))},
                      {"batch", p.batch},
                      {"p_hard_fail", p.p_hard_fail},
                      {"beta", p.beta},
                      {"page_access_ratio", p.page_access_ratio},
                      {"page_reads", p.page_reads},
                      {"page_accesses", p.page_accesses},
                      {"buffer_hits", p.buffer_hits},
                      {"reused", p.reused},
                      {"ecc_soft_events", p.ecc_soft_events},
                      {"makespan_us", p.makespan_us},
                      {"qps", p.qps},
                      {"mean_latency_us", p.mean_latency_us},
                      {"breakdown", p.breakdown},
                      {"topk_digest", p.topk_digest}});
  }
  ordered_json out;
  out["experiment"] = report.experiment;
  out["config"] = report.config_json.empty() ? ordered_json::object()
                                             : ordered_json::parse(report.config_json);
  out["points"] = std::move(points);
  out["ratios"] = report.ratios;
  out["topk_identical"] = report.topk_identical;
  return out.dump(2) + "\n";
}

std::string to_csv(const ExperimentReport& report) {
  std::string out =
      "label,reorder,multiplane,da,sp,accel,batch,p_hard_fail,beta,page_access_ratio,page_reads,"
      "page_accesses,buffer_hits,reused,ecc_soft_events,makespan_us,qps,mean_latency_us,"
      "nand_read,dram,core,bus,pcie,sort,topk_digest\n";
  auto flag = [](bool b) { return b ? "1" : "0"; };
  for (const auto& p : report.points) {
    out += p.label + "," + flag(p.reorder) + "," + flag(p.multiplane) + "," + flag(p.da) + "," +
           flag(p.sp) + "," + std::string(to_string(p.level)) + "," + std::to_string(p.batch) +
           "," + number(p.p_hard_fail) + "," + number(p.beta) + "," + number(p.page_access_ratio) +
           "," + std::to_string(p.page_reads) + "," + std::to_string(p.page_accesses) + "," +
           std::to_string(p.buffer_hits) + "," + std::to_string(p.reused) + "," +
           std::to_string(p.ecc_soft_events) + "," + number(p.makespan_us) + "," + number(p.qps) +
           "," + number(p.mean_latency_us);
    for (const char* key : {"nand_read", "dram", "core", "bus", "pcie", "sort"}) {
      const auto it = p.breakdown.find(key);
      out += "," + number(it == p.breakdown.end() ? 0.0 : it->second);
    }
    out += "," + std::to_string(p.topk_digest) + "\n";
  }
  return out;
}

}  // namespace ndsim
