#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ndsim/config.hpp"
#include "ndsim/engine.hpp"
#include "ndsim/error.hpp"
#include "ndsim/io.hpp"
#include "ndsim/luncsr.hpp"
#include "ndsim/ndp.hpp"
#include "ndsim/reorder.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitArtifact = 4;
constexpr int kExitSimulation = 5;

int exit_code_for(ndsim::ErrorKind kind) {
  using ndsim::ErrorKind;
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Geometry:
    case ErrorKind::Parameter:
      return kExitConfig;
    case ErrorKind::Artifact:
      return kExitArtifact;
    case ErrorKind::Simulation:
    case ErrorKind::Refresh:
      return kExitSimulation;
    default:
      return kExitData;
  }
}

// Command-line overrides; unset values leave the file/default value alone.
struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> base;
  std::optional<std::string> queries;
  std::optional<std::uint32_t> count;
  std::optional<std::uint32_t> dim;
  std::optional<std::uint32_t> query_count;
  std::optional<std::uint32_t> max_degree;
  std::optional<std::uint32_t> ef_construction;
  std::optional<std::uint32_t> ef;
  std::optional<std::uint32_t> k;
  std::optional<std::string> distance;
  std::optional<std::string> flags;
  std::optional<std::string> accel;
  std::optional<std::uint32_t> batch;
  std::optional<std::uint32_t> max_per_pass;
  std::optional<double> p_hard_fail;
  std::optional<std::uint32_t> workers;
};

void add_common(CLI::App& cmd, Overrides& o) {
  cmd.add_option("-c,--config", o.config_path, "JSON experiment config");
  cmd.add_option("--seed", o.seed, "Master seed (overrides NDSIM_SEED and the config)");
  cmd.add_option("-o,--out", o.out, "Output directory");
  cmd.add_option("--base", o.base, "Base vectors (.fvecs or .bvecs)");
  cmd.add_option("--queries", o.queries, "Query vectors (.fvecs or .bvecs)");
  cmd.add_option("--count", o.count, "Synthetic base size");
  cmd.add_option("--dim", o.dim, "Synthetic dimension");
  cmd.add_option("--query-count", o.query_count, "Number of queries");
  cmd.add_option("--max-degree", o.max_degree, "Graph out-degree bound R");
  cmd.add_option("--ef-construction", o.ef_construction, "Beam width during construction");
  cmd.add_option("--ef", o.ef, "Search beam width");
  cmd.add_option("-k", o.k, "Results per query");
  cmd.add_option("--distance", o.distance, "l2, ip or angular");
  cmd.add_option("--flags", o.flags, "Comma list of re,mp,da,sp, or all / none");
  cmd.add_option("--accel", o.accel, "lun, chip, channel or host");
  cmd.add_option("--batch", o.batch, "Batch size");
  cmd.add_option("--max-per-pass", o.max_per_pass, "Largest batch processed in one pass");
  cmd.add_option("--p-hard-fail", o.p_hard_fail, "Hard-decision ECC failure probability");
  cmd.add_option("--workers", o.workers, "Parallel grid workers (0 = all cores)");
}

void apply_flags(ndsim::ExperimentConfig& c, const std::string& spec) {
  c.reorder = c.multiplane = c.da = c.sp = false;
  if (spec == "none") return;
  if (spec == "all") {
    c.reorder = c.multiplane = c.da = c.sp = true;
    return;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "re") c.reorder = true;
    else if (item == "mp") c.multiplane = true;
    else if (item == "da") c.da = true;
    else if (item == "sp") c.sp = true;
    else if (!item.empty()) throw ndsim::Error(ndsim::ErrorKind::Config, "unknown flag '" + item + "'");
  }
}

ndsim::ExperimentConfig resolve(const Overrides& o) {
  ndsim::ExperimentConfig c;
  if (!o.config_path.empty()) c = ndsim::load_config(o.config_path, c);
  if (const char* env = std::getenv("NDSIM_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long s = std::strtoull(env, &end, 10);
    if (*end != '\0') throw ndsim::Error(ndsim::ErrorKind::Config, "NDSIM_SEED is not an integer");
    c.set_seed(s);
  }
  if (o.seed) c.set_seed(*o.seed);
  if (o.out) c.output_dir = *o.out;
  if (o.base) c.workload.base_path = *o.base;
  if (o.queries) c.workload.query_path = *o.queries;
  if (o.count) c.workload.synthetic.count = *o.count;
  if (o.dim) c.workload.synthetic.dim = *o.dim;
  if (o.query_count) c.workload.query_count = *o.query_count;
  if (o.max_degree) c.workload.max_degree = *o.max_degree;
  if (o.ef_construction) c.workload.ef_construction = *o.ef_construction;
  if (o.ef) c.ef = *o.ef;
  if (o.k) c.k = *o.k;
  if (o.distance) {
    try {
      c.workload.kind = ndsim::distance_kind_from_name(*o.distance);
    } catch (const ndsim::Error& e) {
      throw ndsim::Error(ndsim::ErrorKind::Config, e.what());
    }
  }
  if (o.flags) apply_flags(c, *o.flags);
  if (o.accel) {
    try {
      c.accel = ndsim::accel_level_from_name(*o.accel);
    } catch (const ndsim::Error& e) {
      throw ndsim::Error(ndsim::ErrorKind::Config, e.what());
    }
  }
  if (o.batch) c.batch_size = *o.batch;
  if (o.max_per_pass) c.max_batch_per_pass = *o.max_per_pass;
  if (o.p_hard_fail) c.ecc.p_hard_fail = *o.p_hard_fail;
  if (o.workers) c.workers = *o.workers;
  c.validate();
  return c;
}

fs::path out_dir(const ndsim::ExperimentConfig& c) {
  fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ndsim::Error(ndsim::ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  ndsim::write_file_atomic(path, std::string_view(text));
  std::cout << "wrote " << path.string() << "\n";
}

ordered_json config_echo(const ndsim::ExperimentConfig& c) {
  return ordered_json::parse(ndsim::config_to_json(c));
}

struct Prepared {
  ndsim::Workload workload;
  ndsim::Graph graph;
};

Prepared prepare(const ndsim::ExperimentConfig& c, bool build) {
  Prepared p{ndsim::make_workload(c.workload), {}};
  if (p.workload.base.loaded_empty()) std::cerr << "warning: base vector file is empty\n";
  if (build) p.graph = ndsim::build_workload_graph(p.workload, c.workload);
  return p;
}

int cmd_build(const ndsim::ExperimentConfig& c) {
  const fs::path dir = out_dir(c);
  Prepared p = prepare(c, true);
  const ndsim::Ordering ordering =
      c.reorder ? ndsim::degree_ascending_bfs(p.graph) : ndsim::Ordering::identity(p.graph.size());
  const double beta_before = ndsim::bandwidth(p.graph, ndsim::Ordering::identity(p.graph.size()));
  const double beta_after = ndsim::bandwidth(p.graph, ordering);
  const auto mode = c.multiplane ? ndsim::PlacementMode::MultiPlane : ndsim::PlacementMode::Striped;
  const ndsim::Layout layout =
      ndsim::make_layout(p.graph, p.workload.base.record_bytes(), c.geometry, c.reorder, mode);

  ndsim::save_graph(p.graph, dir / "graph.lcsr");
  ndsim::save_ordering(ordering, dir / "ordering.ordr");
  ndsim::save_luncsr(layout.luncsr, dir / "layout.lncr");
  ordered_json manifest = {{"config", config_echo(c)},
                           {"vertices", p.graph.size()},
                           {"edge_entries", p.graph.edge_entries()},
                           {"slots_per_page", layout.luncsr.slots_per_page()},
                           {"beta_before", beta_before},
                           {"beta_after", beta_after}};
  write_text(dir / "build.json", manifest.dump(2) + "\n");
  std::printf("beta before reordering: %.4f\nbeta after reordering:  %.4f\n", beta_before, beta_after);
  return kExitOk;
}

// Loads the artifacts written by `build`, re-deriving the placement from the
// graph when the requested re/mp flags differ from the stored layout.
ndsim::Layout load_layout(const ndsim::ExperimentConfig& c, const Prepared& p, ndsim::Graph& graph) {
  const fs::path dir(c.output_dir);
  graph = ndsim::load_graph(dir / "graph.lcsr");
  const ndsim::Ordering stored = ndsim::load_ordering(dir / "ordering.ordr");
  ndsim::Luncsr luncsr = ndsim::load_luncsr(dir / "layout.lncr");
  if (graph.size() != p.workload.base.count() || stored.size() != graph.size() ||
      luncsr.size() != graph.size()) {
    throw ndsim::Error(ndsim::ErrorKind::Artifact,
                       "artifacts in " + dir.string() + " do not match the dataset (" +
                           std::to_string(graph.size()) + " vertices vs " +
                           std::to_string(p.workload.base.count()) + " vectors); rerun build");
  }
  const auto mode = c.multiplane ? ndsim::PlacementMode::MultiPlane : ndsim::PlacementMode::Striped;
  const ndsim::Ordering wanted =
      c.reorder ? ndsim::degree_ascending_bfs(graph) : ndsim::Ordering::identity(graph.size());
  if (wanted == stored && luncsr.mode() == mode && luncsr.geometry() == c.geometry) {
    return ndsim::Layout{std::move(luncsr), stored, stored.inverse()};
  }
  std::cerr << "note: stored layout differs from the requested flags; re-deriving placement\n";
  return ndsim::make_layout(graph, p.workload.base.record_bytes(), c.geometry, c.reorder, mode);
}

int cmd_search(const ndsim::ExperimentConfig& c) {
  const fs::path dir = out_dir(c);
  Prepared p = prepare(c, false);
  const ndsim::Layout layout = load_layout(c, p, p.graph);
  const ndsim::Workload batch = ndsim::take_queries(p.workload, c.batch_size);
  const ndsim::BatchResult result =
      ndsim::run_batch(layout, batch.base, batch.queries, batch.entries, c.engine().ndp);

  ordered_json doc = {{"config", config_echo(c)},
                      {"result", ordered_json::parse(ndsim::to_json(result))}};
  write_text(dir / "results.json", doc.dump() + "\n");

  const ndsim::RatioSummary ratio = ndsim::page_access_ratio(result);
  const auto& sim = result.counters.sim;
  std::ostringstream csv;
  csv << "batch,page_access_ratio,page_reads,page_accesses,buffer_hits,ecc_soft_events,"
         "makespan_us,qps,faulted\n";
  char line[512];
  std::snprintf(line, sizeof line, "%zu,%.17g,%llu,%llu,%llu,%llu,%.17g,%.17g,%llu\n",
                result.queries.size(), ratio.ratio, static_cast<unsigned long long>(sim.page_reads),
                static_cast<unsigned long long>(sim.page_accesses),
                static_cast<unsigned long long>(sim.buffer_hits),
                static_cast<unsigned long long>(sim.ecc_soft_events), result.makespan_us, result.qps,
                static_cast<unsigned long long>(result.counters.faulted));
  csv << line;
  write_text(dir / "report.csv", csv.str());
  std::printf("queries %zu  makespan %.1f us  qps %.1f  page reads %llu  ratio %.4f\n",
              result.queries.size(), result.makespan_us, result.qps,
              static_cast<unsigned long long>(sim.page_reads), ratio.ratio);
  return result.counters.faulted ? kExitSimulation : kExitOk;
}

void print_report(const ndsim::ExperimentReport& r) {
  std::printf("%-24s %12s %12s %14s %12s\n", "point", "ratio", "page_reads", "makespan_us", "qps");
  for (const auto& pt : r.points) {
    std::printf("%-24s %12.4f %12llu %14.1f %12.1f\n", pt.label.c_str(), pt.page_access_ratio,
                static_cast<unsigned long long>(pt.page_reads), pt.makespan_us, pt.qps);
  }
  for (const auto& [name, value] : r.ratios) std::printf("%s = %.4f\n", name.c_str(), value);
  std::printf("top-k identical across points: %s\n", r.topk_identical ? "yes" : "no");
}

int emit(const ndsim::ExperimentConfig& c, ndsim::ExperimentReport report, const std::string& stem) {
  const fs::path dir = out_dir(c);
  report.config_json = ndsim::config_to_json(c);
  write_text(dir / (stem + ".json"), ndsim::to_json(report));
  write_text(dir / (stem + ".csv"), ndsim::to_csv(report));
  print_report(report);
  return kExitOk;
}

ndsim::Workload batch_of(const ndsim::ExperimentConfig& c, const Prepared& p) {
  return ndsim::take_queries(p.workload, c.batch_size);
}

int cmd_ablate(const ndsim::ExperimentConfig& c) {
  Prepared p = prepare(c, true);
  return emit(c, ndsim::ablation(batch_of(c, p), p.graph, c.engine()), "ablation");
}

int cmd_ecc(const ndsim::ExperimentConfig& c) {
  Prepared p = prepare(c, true);
  return emit(c, ndsim::ecc_sweep(batch_of(c, p), p.graph, c.engine(), c.ecc_sweep), "ecc");
}

int cmd_batchsweep(const ndsim::ExperimentConfig& c) {
  Prepared p = prepare(c, true);
  const std::uint32_t largest = *std::max_element(c.batch_sizes.begin(), c.batch_sizes.end());
  const ndsim::Workload w = ndsim::take_queries(p.workload, largest);
  return emit(c, ndsim::batch_sweep(w, p.graph, c.engine(), c.batch_sizes), "batchsweep");
}

// Replays every query of results.json through the software reference search
// and a brute-force scan; fails when any top-k differs from the reference.
int cmd_oracle_check(const ndsim::ExperimentConfig& c, const std::string& results_path) {
  const fs::path dir = out_dir(c);
  const fs::path path = results_path.empty() ? dir / "results.json" : fs::path(results_path);
  const auto bytes = ndsim::read_file_bytes(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ndsim::Error(ndsim::ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (!doc.contains("result") || !doc["result"].contains("results")) {
    throw ndsim::Error(ndsim::ErrorKind::Artifact, path.string() + " is not a search results file");
  }
  Prepared p = prepare(c, false);
  p.graph = ndsim::load_graph(dir / "graph.lcsr");
  if (p.graph.size() != p.workload.base.count()) {
    throw ndsim::Error(ndsim::ErrorKind::Artifact, "graph does not match the dataset; rerun build");
  }
  const ndsim::Workload batch = ndsim::take_queries(p.workload, c.batch_size);

  std::size_t checked = 0, identical = 0;
  double recall_sum = 0.0;
  ordered_json rows = ordered_json::array();
  for (const auto& row : doc["result"]["results"]) {
    const auto qid = row.at("qid").get<std::uint64_t>();
    if (qid >= batch.queries.count()) {
      throw ndsim::Error(ndsim::ErrorKind::Artifact, "results reference query " +
                                                         std::to_string(qid) + " beyond the batch");
    }
    if (row.value("faulted", false)) continue;
    std::vector<ndsim::VertexId> got;
    for (const auto& pair : row.at("topk")) got.push_back(pair.at(0).get<ndsim::VertexId>());

    ndsim::SearchParams params;
    params.ef = c.ef;
    params.k = c.k;
    params.kind = c.workload.kind;
    params.entry = row.at("entry").get<ndsim::VertexId>();
    const auto ref = ndsim::beam_search(p.graph, batch.base, batch.queries.row(qid), params, qid);
    std::vector<ndsim::VertexId> want;
    for (const auto& nb : ref.topk) want.push_back(nb.id);

    std::vector<ndsim::Neighbor> all(batch.base.count());
    for (std::size_t v = 0; v < all.size(); ++v) {
      all[v] = {static_cast<ndsim::VertexId>(v),
                ndsim::distance(c.workload.kind, batch.base.row(v), batch.queries.row(qid))};
    }
    const std::size_t kk = std::min<std::size_t>(c.k, all.size());
    std::partial_sort(all.begin(), all.begin() + kk, all.end(), ndsim::closer);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < kk; ++i) {
      hits += std::count(got.begin(), got.end(), all[i].id);
    }
    const double recall = kk ? static_cast<double>(hits) / kk : 1.0;
    recall_sum += recall;
    ++checked;
    identical += got == want;
    rows.push_back({{"qid", qid}, {"reference", want}, {"match", got == want}, {"recall", recall}});
  }
  const double mean_recall = checked ? recall_sum / checked : 0.0;
  ordered_json out = {{"config", config_echo(c)},
                      {"checked", checked},
                      {"identical", identical},
                      {"mean_recall_at_k", mean_recall},
                      {"queries", rows}};
  write_text(dir / "oracle.json", out.dump() + "\n");
  std::printf("%zu/%zu queries identical to the reference search; recall@%u %.4f\n", identical,
              checked, c.k, mean_recall);
  return identical == checked ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Near-data graph ANN search simulator"};
  app.require_subcommand(1);
  Overrides o;
  std::string results_path;

  auto* build = app.add_subcommand("build", "Build graph, ordering and placement artifacts");
  auto* search = app.add_subcommand("search", "Run one batch against built artifacts");
  auto* ablate = app.add_subcommand("ablate", "Ablation grid bare / re / re+mp / +da / +sp");
  auto* ecc = app.add_subcommand("ecc", "Makespan versus ECC hard-decision failure rate");
  auto* sweep = app.add_subcommand("batchsweep", "Throughput versus batch size per accel level");
  auto* oracle = app.add_subcommand("oracle-check", "Compare search results with reference search");
  for (auto* cmd : {build, search, ablate, ecc, sweep, oracle}) add_common(*cmd, o);
  oracle->add_option("--results", results_path, "Results file (default: <out>/results.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const ndsim::ExperimentConfig c = resolve(o);
    if (build->parsed()) return cmd_build(c);
    if (search->parsed()) return cmd_search(c);
    if (ablate->parsed()) return cmd_ablate(c);
    if (ecc->parsed()) return cmd_ecc(c);
    if (sweep->parsed()) return cmd_batchsweep(c);
    if (oracle->parsed()) return cmd_oracle_check(c, results_path);
  } catch (const ndsim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSimulation;
  }
  return kExitOk;
}
