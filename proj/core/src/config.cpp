#include "ndsim/config.hpp"

#include <set>

#include <json.hpp>

#include "ndsim/io.hpp"

namespace ndsim {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads typed members of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail("", "must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.contains(key)) fail(key, "is not a recognised key");
    }
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = node_.find(key);
    if (it == node_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail(key, "has the wrong type");
    }
  }
  bool has(const char* key) {
    seen_.insert(key);
    return node_.contains(key);
  }
  const json& at(const char* key) {
    seen_.insert(key);
    return node_.at(key);
  }
  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::string where = key.empty() ? path_ : child(key.c_str());
    throw Error(ErrorKind::Config, "config: '" + (where.empty() ? "<root>" : where) + "' " + what);
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t s) {
  seed = s;
  workload.seed = s;
  ecc.seed = s + 7;
}

void ExperimentConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorKind::Config, "batch size must be at least 1");
  if (max_batch_per_pass < 1) throw Error(ErrorKind::Config, "max_batch_per_pass must be positive");
  if (ef < 1 || k < 1 || k > ef) throw Error(ErrorKind::Config, "search requires 1 <= k <= ef");
  if (workload.max_degree < 1) throw Error(ErrorKind::Config, "graph max_degree must be >= 1");
  if (workload.ef_construction < 1) throw Error(ErrorKind::Config, "ef_construction must be >= 1");
  if (workload.base_path.empty() && (workload.synthetic.count == 0 || workload.synthetic.dim == 0)) {
    throw Error(ErrorKind::Config, "dataset needs a base file or a non-empty synthetic spec");
  }
  if (!(ecc.p_hard_fail >= 0.0 && ecc.p_hard_fail <= 1.0)) {
    throw Error(ErrorKind::Config, "ecc.p_hard_fail must lie in [0, 1]");
  }
  for (double p : ecc_sweep) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::Config, "sweep probabilities must lie in [0, 1]");
  }
  for (auto b : batch_sizes) {
    if (b < 1) throw Error(ErrorKind::Config, "sweep batch sizes must be positive");
  }
  try {
    geometry.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  timing.validate();
}

EngineConfig ExperimentConfig::engine() const {
  EngineConfig e;
  e.geometry = geometry;
  e.reorder = reorder;
  e.placement = multiplane ? PlacementMode::MultiPlane : PlacementMode::Striped;
  e.workers = workers;
  NdpConfig& n = e.ndp;
  n.ef = ef;
  n.k = k;
  n.kind = workload.kind;
  n.dynamic_allocation = da;
  n.speculation = sp;
  n.level = accel;
  n.serialize_luns = serialize_luns;
  n.max_batch_per_pass = max_batch_per_pass;
  n.refresh_threshold = refresh_threshold;
  n.refresh_seed = seed + 11;
  n.timing = timing;
  n.ecc = ecc;
  return e;
}

ExperimentConfig parse_config(const std::string& json_text, ExperimentConfig c) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
  }
  Section root(doc, "");
  if (root.has("seed")) {
    std::uint64_t s = c.seed;
    root.get("seed", s);
    c.set_seed(s);
  }
  if (root.has("dataset")) {
    Section d(root.at("dataset"), "dataset");
    d.get("base", c.workload.base_path);
    d.get("queries", c.workload.query_path);
    d.get("query_count", c.workload.query_count);
    if (d.has("synthetic")) {
      Section s(d.at("synthetic"), d.child("synthetic"));
      s.get("count", c.workload.synthetic.count);
      s.get("dim", c.workload.synthetic.dim);
      s.get("clusters", c.workload.synthetic.clusters);
      s.get("center_range", c.workload.synthetic.center_range);
      s.get("sigma", c.workload.synthetic.sigma);
    }
  }
  if (root.has("graph")) {
    Section g(root.at("graph"), "graph");
    g.get("max_degree", c.workload.max_degree);
    g.get("ef_construction", c.workload.ef_construction);
  }
  if (root.has("search")) {
    Section s(root.at("search"), "search");
    s.get("ef", c.ef);
    s.get("k", c.k);
    if (s.has("distance")) {
      std::string name;
      s.get("distance", name);
      try {
        c.workload.kind = distance_kind_from_name(name);
      } catch (const Error& e) {
        throw Error(ErrorKind::Config, std::string("config: search.distance: ") + e.what());
      }
    }
  }
  if (root.has("geometry")) {
    Section g(root.at("geometry"), "geometry");
    if (g.has("preset")) {
      std::string preset;
      g.get("preset", preset);
      if (preset != "standard") g.fail("preset", "must be \"standard\"");
      c.geometry = SsdGeometry::standard();
    }
    g.get("channels", c.geometry.channels);
    g.get("chips_per_channel", c.geometry.chips_per_channel);
    g.get("luns_per_chip", c.geometry.luns_per_chip);
    g.get("planes_per_lun", c.geometry.planes_per_lun);
    const std::uint32_t blocks_before = c.geometry.blocks_per_plane;
    g.get("blocks_per_plane", c.geometry.blocks_per_plane);
    if (c.geometry.blocks_per_plane != blocks_before) {
      c.geometry.spare_blocks_per_plane = c.geometry.blocks_per_plane / 32;
    }
    g.get("pages_per_block", c.geometry.pages_per_block);
    g.get("page_bytes", c.geometry.page_bytes);
    g.get("spare_blocks_per_plane", c.geometry.spare_blocks_per_plane);
  }
  if (root.has("timing")) {
    Section t(root.at("timing"), "timing");
    TimingConfig& tc = c.timing;
    t.get("t_page_read_us", tc.t_page_read_us);
    t.get("t_chip_bus_xfer_us", tc.t_chip_bus_xfer_us);
    t.get("t_mac_per_vector_us", tc.t_mac_per_vector_us);
    t.get("t_dram_access_us", tc.t_dram_access_us);
    t.get("dram_parallelism", tc.dram_parallelism);
    t.get("t_core_op_us", tc.t_core_op_us);
    t.get("t_pcie_per_kb_us", tc.t_pcie_per_kb_us);
    t.get("t_soft_ldpc_us", tc.t_soft_ldpc_us);
    t.get("t_sort_base_us", tc.t_sort_base_us);
    t.get("t_sort_per_item_us", tc.t_sort_per_item_us);
    t.get("embedded_cores", tc.embedded_cores);
    t.get("soft_decoders", tc.soft_decoders);
    t.get("host_threads", tc.host_threads);
  }
  if (root.has("ecc")) {
    Section e(root.at("ecc"), "ecc");
    e.get("p_hard_fail", c.ecc.p_hard_fail);
    e.get("ber_mean", c.ecc.ber_mean);
    e.get("ber_log_sigma", c.ecc.ber_log_sigma);
  }
  if (root.has("flags")) {
    Section f(root.at("flags"), "flags");
    f.get("reorder", c.reorder);
    f.get("multiplane", c.multiplane);
    f.get("da", c.da);
    f.get("sp", c.sp);
  }
  if (root.has("accel")) {
    std::string level;
    root.get("accel", level);
    c.accel = accel_level_from_name(level);
  }
  root.get("serialize_luns", c.serialize_luns);
  if (root.has("batch")) {
    Section b(root.at("batch"), "batch");
    b.get("size", c.batch_size);
    b.get("max_per_pass", c.max_batch_per_pass);
  }
  root.get("refresh_threshold", c.refresh_threshold);
  if (root.has("sweeps")) {
    Section s(root.at("sweeps"), "sweeps");
    s.get("p_hard_fail", c.ecc_sweep);
    s.get("batch_sizes", c.batch_sizes);
  }
  if (root.has("output")) {
    Section o(root.at("output"), "output");
    o.get("dir", c.output_dir);
  }
  root.get("workers", c.workers);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, e.what());
  }
  return parse_config(std::string(bytes.begin(), bytes.end()), std::move(base));
}

std::string config_to_json(const ExperimentConfig& c) {
  const auto& s = c.workload.synthetic;
  const auto& g = c.geometry;
  const auto& t = c.timing;
  ordered_json out = {
      {"seed", c.seed},
      {"dataset",
       {{"base", c.workload.base_path},
        {"queries", c.workload.query_path},
        {"query_count", c.workload.query_count},
        {"synthetic",
         {{"count", s.count},
          {"dim", s.dim},
          {"clusters", s.clusters},
          {"center_range", s.center_range},
          {"sigma", s.sigma}}}}},
      {"graph",
       {{"max_degree", c.workload.max_degree}, {"ef_construction", c.workload.ef_construction}}},
      {"search",
       {{"ef", c.ef}, {"k", c.k}, {"distance", std::string(to_string(c.workload.kind))}}},
      {"geometry",
       {{"channels", g.channels},
        {"chips_per_channel", g.chips_per_channel},
        {"luns_per_chip", g.luns_per_chip},
        {"planes_per_lun", g.planes_per_lun},
        {"blocks_per_plane", g.blocks_per_plane},
        {"pages_per_block", g.pages_per_block},
        {"page_bytes", g.page_bytes},
        {"spare_blocks_per_plane", g.spare_blocks_per_plane}}},
      {"timing",
       {{"t_page_read_us", t.t_page_read_us},
        {"t_chip_bus_xfer_us", t.t_chip_bus_xfer_us},
        {"t_mac_per_vector_us", t.t_mac_per_vector_us},
        {"t_dram_access_us", t.t_dram_access_us},
        {"dram_parallelism", t.dram_parallelism},
        {"t_core_op_us", t.t_core_op_us},
        {"t_pcie_per_kb_us", t.t_pcie_per_kb_us},
        {"t_soft_ldpc_us", t.t_soft_ldpc_us},
        {"t_sort_base_us", t.t_sort_base_us},
        {"t_sort_per_item_us", t.t_sort_per_item_us},
        {"embedded_cores", t.embedded_cores},
        {"soft_decoders", t.soft_decoders},
        {"host_threads", t.host_threads}}},
      {"ecc",
       {{"p_hard_fail", c.ecc.p_hard_fail},
        {"ber_mean", c.ecc.ber_mean},
        {"ber_log_sigma", c.ecc.ber_log_sigma}}},
      {"flags", {{"reorder", c.reorder}, {"multiplane", c.multiplane}, {"da", c.da}, {"sp", c.sp}}},
      {"accel", std::string(to_string(c.accel))},
      {"serialize_luns", c.serialize_luns},
      {"batch", {{"size", c.batch_size}, {"max_per_pass", c.max_batch_per_pass}}},
      {"refresh_threshold", c.refresh_threshold},
      {"sweeps", {{"p_hard_fail", c.ecc_sweep}, {"batch_sizes", c.batch_sizes}}},
      {"output", {{"dir", c.output_dir}}},
      {"workers", c.workers}};
  return out.dump(2);
}

}  // namespace ndsim
