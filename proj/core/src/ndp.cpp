#include "ndsim/ndp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include <json.hpp>

namespace ndsim {

namespace {

struct FartherFirst {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(b, a); }
};
struct CloserFirst {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(a, b); }
};

std::uint32_t ceil_log2(std::size_t n) {
  return n <= 1 ? 0 : static_cast<std::uint32_t>(std::bit_width(n - 1));
}

// 64-byte DRAM lines touched when reading a vertex's offset and neighbor IDs.
std::uint64_t adjacency_lines(std::size_t degree) { return 1 + (degree * 4 + 63) / 64; }

template <class NeighborsOf>
std::vector<Preference> rank_second_order(VertexId entry, std::uint32_t limit,
                                          NeighborsOf&& neighbors_of) {
  std::vector<VertexId> first;
  neighbors_of(entry, first);
  std::sort(first.begin(), first.end());
  std::map<VertexId, std::uint32_t> score;
  std::vector<VertexId> second;
  for (VertexId u : first) {
    neighbors_of(u, second);
    for (VertexId w : second) {
      if (w == entry || std::binary_search(first.begin(), first.end(), w)) continue;
      ++score[w];
    }
  }
  std::vector<Preference> ranked;
  ranked.reserve(score.size());
  for (const auto& [w, s] : score) ranked.push_back({w, s});
  std::sort(ranked.begin(), ranked.end(), [](const Preference& a, const Preference& b) {
    return a.score > b.score || (a.score == b.score && a.vertex < b.vertex);
  });
  if (ranked.size() > limit) ranked.resize(limit);
  return ranked;
}

// Commands for the items of one LUN: grouped by page address, then plane,
// then block; the r-th block of every plane at a page address shares a command.
void plan_lun(std::uint32_t lun, const std::vector<WorkItem>& items, const Luncsr& luncsr,
              DistanceKind kind, std::vector<PlannedCommand>& out) {
  std::map<std::uint32_t, std::map<std::uint32_t, std::map<std::uint32_t, std::vector<WorkItem>>>>
      by_page;
  for (const WorkItem& item : items) {
    const PhysicalAddress a = luncsr.physical_address(item.vertex);
    by_page[a.page][a.plane][a.block].push_back(item);
  }
  for (auto& [page, planes] : by_page) {
    std::size_t rounds = 0;
    for (const auto& [plane, blocks] : planes) rounds = std::max(rounds, blocks.size());
    for (std::size_t r = 0; r < rounds; ++r) {
      PlannedCommand pc;
      pc.cmd.lun = lun;
      pc.cmd.distance = kind;
      for (auto& [plane, blocks] : planes) {
        if (r >= blocks.size()) continue;
        auto it = std::next(blocks.begin(), static_cast<std::ptrdiff_t>(r));
        auto& served = it->second;
        pc.cmd.planes.push_back(
            PlaneTarget{plane, it->first, page, static_cast<std::uint32_t>(served.size())});
        if (std::any_of(served.begin(), served.end(),
                        [&](const WorkItem& w) { return w.query != served.front().query; })) {
          pc.cmd.page_loc_bit = true;
        }
        pc.items.push_back(std::move(served));
      }
      out.push_back(std::move(pc));
    }
  }
}

}  // namespace

Layout make_layout(const Graph& graph, std::size_t record_bytes, const SsdGeometry& geometry,
                   bool reorder, PlacementMode mode) {
  Ordering to_storage = reorder ? degree_ascending_bfs(graph) : Ordering::identity(graph.size());
  Graph storage = reorder ? apply_ordering(graph, to_storage) : graph;
  const std::uint32_t slots = slots_per_page_for(geometry, record_bytes);
  Placement placement = map_to_physical(graph.size(), geometry, slots, mode);
  Layout layout;
  layout.to_original = to_storage.inverse();
  layout.to_storage = std::move(to_storage);
  layout.luncsr = Luncsr::build(std::move(storage), placement);
  return layout;
}

QueryState::QueryState(std::size_t n, std::uint32_t ef, std::uint64_t query_id)
    : ef_(ef), visited_((n + 63) / 64, 0) {
  if (ef == 0) throw Error(ErrorKind::Parameter, "ef must be positive");
  trace_.query_id = query_id;
}

bool QueryState::mark(VertexId v) {
  std::uint64_t& word = visited_[v >> 6];
  const std::uint64_t bit = std::uint64_t{1} << (v & 63);
  if (word & bit) return false;
  word |= bit;
  return true;
}

void QueryState::start(VertexId entry) {
  if (static_cast<std::size_t>(entry) >= visited_.size() * 64) {
    throw Error(ErrorKind::Range, "entry vertex " + std::to_string(entry) + " out of range");
  }
  mark(entry);
  pending_ = {entry};
  active_ = true;
}

std::uint32_t QueryState::gather(std::vector<Neighbor> distances, const NeighborFn& neighbors_of) {
  if (!active_) return 0;
  std::sort(distances.begin(), distances.end(), closer);
  for (const Neighbor& nb : distances) {
    trace_.visited.push_back(nb.id);
    if (results_.size() < ef_ || closer(nb, results_.front())) {
      candidates_.push_back(nb);
      std::push_heap(candidates_.begin(), candidates_.end(), FartherFirst{});
      results_.push_back(nb);
      std::push_heap(results_.begin(), results_.end(), CloserFirst{});
      if (results_.size() > ef_) {
        std::pop_heap(results_.begin(), results_.end(), CloserFirst{});
        results_.pop_back();
      }
    }
  }
  pending_.clear();
  std::uint32_t popped = 0;
  std::vector<VertexId> adjacent;
  while (pending_.empty()) {
    if (candidates_.empty()) {
      active_ = false;
      break;
    }
    std::pop_heap(candidates_.begin(), candidates_.end(), FartherFirst{});
    const Neighbor c = candidates_.back();
    candidates_.pop_back();
    ++popped;
    if (results_.size() >= ef_ && c.distance > results_.front().distance) {
      active_ = false;
      break;
    }
    trace_.entries.push_back(c.id);
    expanded_ = c.id;
    neighbors_of(c.id, adjacent);
    for (VertexId u : adjacent) {
      if (mark(u)) pending_.push_back(u);
    }
  }
  return popped;
}

std::vector<Neighbor> QueryState::results() const {
  std::vector<Neighbor> out = results_;
  std::sort(out.begin(), out.end(), closer);
  return out;
}

LunWorklist allocate_batch(std::span<const QueryWork> work, const Luncsr& luncsr) {
  std::map<std::uint32_t, std::vector<WorkItem>> by_lun;
  for (const QueryWork& w : work) {
    for (VertexId v : w.vertices) by_lun[luncsr.lun_of(v)].push_back({w.query, v});
  }
  LunWorklist out;
  out.reserve(by_lun.size());
  for (auto& [lun, items] : by_lun) out.push_back({lun, std::move(items)});
  return out;
}

std::vector<PlannedCommand> plan_commands(
    std::span<const QueryWork> work, const Luncsr& luncsr, bool batch_wise, DistanceKind kind,
    const std::function<bool(std::uint32_t, const PlaneTarget&)>& latched) {
  std::vector<PlannedCommand> out;
  if (!batch_wise) {
    for (const QueryWork& w : work) {
      for (const LunWork& lw : allocate_batch(std::span(&w, 1), luncsr)) {
        plan_lun(lw.lun, lw.items, luncsr, kind, out);
      }
    }
    return out;
  }
  for (const LunWork& lw : allocate_batch(work, luncsr)) {
    const std::size_t first = out.size();
    plan_lun(lw.lun, lw.items, luncsr, kind, out);
    if (latched) {
      std::stable_partition(out.begin() + static_cast<std::ptrdiff_t>(first), out.end(),
                            [&](const PlannedCommand& pc) {
                              return std::all_of(
                                  pc.cmd.planes.begin(), pc.cmd.planes.end(),
                                  [&](const PlaneTarget& t) { return latched(pc.cmd.lun, t); });
                            });
    }
  }
  return out;
}

std::vector<Preference> second_order_preference(const Graph& graph, VertexId entry,
                                                std::uint32_t limit) {
  if (entry >= graph.size()) {
    throw Error(ErrorKind::Range, "entry vertex " + std::to_string(entry) + " out of range");
  }
  return rank_second_order(entry, limit, [&](VertexId v, std::vector<VertexId>& out) {
    const auto nb = graph.neighbors(v);
    out.assign(nb.begin(), nb.end());
  });
}

std::size_t merge_speculation(std::vector<VertexId>& pending,
                              const std::map<VertexId, float>& ready,
                              std::vector<Neighbor>& reused) {
  std::size_t count = 0;
  std::erase_if(pending, [&](VertexId v) {
    const auto it = ready.find(v);
    if (it == ready.end()) return false;
    reused.push_back({v, it->second});
    ++count;
    return true;
  });
  return count;
}

std::size_t padded_length(std::size_t n) noexcept { return n <= 1 ? n : std::bit_ceil(n); }

std::vector<Neighbor> bitonic_sort(std::vector<Neighbor> list) {
  const std::size_t n = list.size();
  const std::size_t padded = padded_length(n);
  list.resize(padded, Neighbor{std::numeric_limits<VertexId>::max(),
                               std::numeric_limits<float>::infinity()});
  for (std::size_t k = 2; k <= padded; k <<= 1) {
    for (std::size_t j = k >> 1; j > 0; j >>= 1) {
      for (std::size_t i = 0; i < padded; ++i) {
        const std::size_t l = i ^ j;
        if (l <= i) continue;
        const bool ascending = (i & k) == 0;
        if (ascending ? closer(list[l], list[i]) : closer(list[i], list[l])) {
          std::swap(list[i], list[l]);
        }
      }
    }
  }
  list.resize(n);
  return list;
}

std::vector<Neighbor> bitonic_topk(std::vector<Neighbor> list, std::uint32_t k) {
  if (k == 0) throw Error(ErrorKind::Parameter, "top-k requires k >= 1");
  list = bitonic_sort(std::move(list));
  if (list.size() > k) list.resize(k);
  return list;
}

std::map<std::string, double> BatchResult::breakdown() const {
  double total = 0.0;
  for (auto d : charges.total) total += to_us(d);
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < kChargeCategories; ++i) {
    const auto c = static_cast<ChargeCategory>(i);
    out[std::string(to_string(c))] = total > 0.0 ? to_us(charges[c]) / total : 0.0;
  }
  return out;
}

BatchResult run_batch(const Layout& layout, const VectorSet& base, const VectorSet& queries,
                      std::span<const VertexId> entries, const NdpConfig& config) {
  if (config.ef < 1 || config.k < 1 || config.k > config.ef) {
    throw Error(ErrorKind::Parameter, "search parameters require 1 <= k <= ef");
  }
  if (config.max_batch_per_pass < 1) {
    throw Error(ErrorKind::Parameter, "max_batch_per_pass must be positive");
  }
  if (queries.count() == 0) throw Error(ErrorKind::Parameter, "batch must hold at least one query");
  if (entries.size() != queries.count()) {
    throw Error(ErrorKind::Parameter, "one entry vertex per query is required");
  }
  const std::size_t n = layout.luncsr.size();
  if (n == 0 || base.count() != n) {
    throw Error(ErrorKind::Parameter, "base vectors must match the graph's vertex count");
  }
  if (queries.dim() != base.dim()) {
    throw Error(ErrorKind::Dimension, "query dimension " + std::to_string(queries.dim()) +
                                          " differs from base dimension " +
                                          std::to_string(base.dim()));
  }

  Luncsr store = layout.luncsr;
  SimOptions options;
  options.level = config.level;
  options.serialize_luns = config.serialize_luns;
  options.ecc = config.ecc;
  options.refresh_threshold = config.refresh_threshold;
  options.record_events = config.record_events;
  SsdSim sim(store.geometry(), config.timing, options);
  std::mt19937_64 refresh_rng(config.refresh_seed);

  const TimingConfig& tc = config.timing;
  const double dram_us = tc.t_dram_access_us / tc.dram_parallelism;
  const double core_us = tc.t_core_op_us;
  const Ordering& to_storage = layout.to_storage;
  const Ordering& to_original = layout.to_original;

  std::uint64_t fetched_lines = 0;  // adjacency lines read by the current gather
  const QueryState::NeighborFn neighbors_of = [&](VertexId v, std::vector<VertexId>& out) {
    out.clear();
    const auto nb = store.neighbors(to_storage[v]);
    fetched_lines += adjacency_lines(nb.size());
    for (VertexId u : nb) out.push_back(to_original[u]);
  };
  auto dist = [&](std::uint32_t q, VertexId original) {
    return distance(config.kind, queries.row(q), base.row(original));
  };

  BatchResult result;
  result.queries.resize(queries.count());
  std::vector<std::uint32_t> valid;
  for (std::uint32_t q = 0; q < queries.count(); ++q) {
    QueryOutcome& out = result.queries[q];
    out.query_id = q;
    out.entry = entries[q];
    out.k_clamped = config.k > n;
    if (entries[q] >= n) {
      out.faulted = true;
      out.fault = "entry vertex " + std::to_string(entries[q]) + " out of range (n = " +
                  std::to_string(n) + ")";
      ++result.counters.faulted;
    } else {
      valid.push_back(q);
    }
  }

  struct Issued {
    CommandId id;
    std::vector<std::vector<WorkItem>> items;  // WorkItem::query is the global query index
  };
  auto attribute = [&](const Issued& issued) {
    const CommandStatus& status = sim.status(issued.id);
    std::vector<std::uint32_t> sharers;
    for (std::size_t p = 0; p < issued.items.size(); ++p) {
      if (!status.plane_read[p]) continue;
      sharers.clear();
      for (const WorkItem& w : issued.items[p]) sharers.push_back(w.query);
      std::sort(sharers.begin(), sharers.end());
      sharers.erase(std::unique(sharers.begin(), sharers.end()), sharers.end());
      const double share = 1.0 / static_cast<double>(sharers.size());
      for (auto q : sharers) result.queries[q].page_reads += share;
    }
  };
  auto submit_all = [&](std::span<const QueryWork> work, SimTime at, Priority priority) {
    std::vector<Issued> issued;
    auto latched = [&](std::uint32_t lun, const PlaneTarget& t) { return sim.latched(lun, t); };
    for (PlannedCommand& pc :
         plan_commands(work, store, config.dynamic_allocation, config.kind, latched)) {
      issued.push_back({sim.submit(pc.cmd, at, priority), std::move(pc.items)});
    }
    return issued;
  };

  SimTime t{};
  SimTime sorter_free{};
  std::uint32_t pass = 0;
  for (std::size_t begin = 0; begin < valid.size(); begin += config.max_batch_per_pass, ++pass) {
    const std::size_t end = std::min(valid.size(), begin + config.max_batch_per_pass);
    const std::span<const std::uint32_t> chunk(valid.data() + begin, end - begin);
    ++result.counters.passes;
    std::map<std::uint32_t, std::size_t> local;
    for (std::size_t i = 0; i < chunk.size(); ++i) local.emplace(chunk[i], i);

    std::vector<QueryState> states;
    states.reserve(chunk.size());
    std::vector<std::uint64_t> lines(chunk.size(), 0);
    for (std::uint32_t q : chunk) {
      states.emplace_back(n, config.ef, q);
      states.back().start(entries[q]);
    }
    std::vector<Issued> speculative;
    std::vector<std::map<VertexId, float>> ready(chunk.size());

    auto any_active = [&] {
      return std::any_of(states.begin(), states.end(),
                         [](const QueryState& s) { return s.active(); });
    };
    while (any_active()) {
      ++result.counters.iterations;

      // Allocating: neighbor lists, then LUN and BLK entries per neighbor.
      double dram_accesses = 0.0;
      double core_ops = 0.0;
      for (std::size_t i = 0; i < states.size(); ++i) {
        if (!states[i].active()) continue;
        dram_accesses += static_cast<double>(lines[i] + 3 * states[i].pending().size());
        core_ops += static_cast<double>(states[i].pending().size() + 1);
        lines[i] = 0;
      }
      sim.charge(ChargeCategory::Dram, from_us(dram_accesses * dram_us));
      sim.charge(ChargeCategory::Core, from_us(core_ops * core_us));
      const SimTime alloc_end = t + from_us(dram_accesses * dram_us + core_ops * core_us);

      for (auto& r : ready) r.clear();
      if (!speculative.empty()) {
        sim.run_until(alloc_end);
        sim.abort_speculative(alloc_end);
        for (const Issued& issued : speculative) {
          attribute(issued);
          if (sim.status(issued.id).state != CommandState::Done) continue;
          for (const auto& plane_items : issued.items) {
            for (const WorkItem& w : plane_items) {
              const VertexId original = to_original[w.vertex];
              ready[local.at(w.query)].emplace(original, dist(w.query, original));
            }
          }
        }
        speculative.clear();
      }
      sim.retire(sim.next_id());

      // Searching.
      std::vector<std::vector<Neighbor>> tprop(states.size());
      std::vector<QueryWork> work;
      for (std::size_t i = 0; i < states.size(); ++i) {
        if (!states[i].active()) continue;
        std::vector<VertexId> to_read = states[i].pending();
        if (config.speculation) {
          result.counters.reused += merge_speculation(to_read, ready[i], tprop[i]);
        }
        if (to_read.empty()) continue;
        QueryWork w{chunk[i], {}};
        for (VertexId v : to_read) w.vertices.push_back(to_storage[v]);
        work.push_back(std::move(w));
      }
      const std::vector<Issued> normal = submit_all(work, alloc_end, Priority::Normal);
      const SimTime search_end = std::max(alloc_end, sim.drain_normal());
      for (const Issued& issued : normal) attribute(issued);
      for (const QueryWork& w : work) {
        const std::size_t i = local.at(w.query);
        for (VertexId v : w.vertices) {
          const VertexId original = to_original[v];
          tprop[i].push_back({original, dist(w.query, original)});
        }
      }

      // Speculative allocation ran alongside searching; it gets the same span.
      if (config.speculation) {
        const double budget = to_us(search_end - alloc_end);
        double spent = 0.0;
        std::vector<QueryWork> prefetch;
        std::vector<VertexId> adjacent;
        // One PrefList per distinct entry; queries sharing an entry share it.
        std::map<VertexId, std::vector<Preference>> pref_lists;
        for (std::size_t i = 0; i < states.size(); ++i) {
          if (!states[i].active() || !states[i].expanded()) continue;
          const VertexId e = *states[i].expanded();
          auto found = pref_lists.find(e);
          if (found == pref_lists.end()) {
            neighbors_of(e, adjacent);
            const auto degree = static_cast<std::uint32_t>(adjacent.size());
            const std::uint64_t before = fetched_lines;
            const auto limit = config.speculation_limit ? config.speculation_limit : degree;
            auto prefs = rank_second_order(e, limit, neighbors_of);
            const double lines_read = static_cast<double>(fetched_lines - before);
            double scored = 0.0;
            for (VertexId u : adjacent) scored += store.graph().degree(to_storage[u]);
            const double cost = (lines_read + 3.0 * prefs.size()) * dram_us +
                                scored * core_us / tc.embedded_cores;
            if (spent + cost > budget) break;
            spent += cost;
            sim.charge(ChargeCategory::Dram, from_us((lines_read + 3.0 * prefs.size()) * dram_us));
            sim.charge(ChargeCategory::Core, from_us(scored * core_us));
            found = pref_lists.emplace(e, std::move(prefs)).first;
          }
          QueryWork w{chunk[i], {}};
          for (const Preference& p : found->second) {
            if (!states[i].visited(p.vertex)) w.vertices.push_back(to_storage[p.vertex]);
          }
          result.counters.speculated += w.vertices.size();
          if (!w.vertices.empty()) prefetch.push_back(std::move(w));
        }
        speculative = submit_all(prefetch, search_end, Priority::Speculative);
      }

      // Gathering on the embedded cores.
      double gather_ops = 0.0;
      const double log_ef = ceil_log2(config.ef) + 1.0;
      for (std::size_t i = 0; i < states.size(); ++i) {
        if (!states[i].active()) continue;
        const double m = static_cast<double>(tprop[i].size());
        fetched_lines = 0;
        const std::uint32_t popped = states[i].gather(std::move(tprop[i]), neighbors_of);
        lines[i] += fetched_lines;
        gather_ops += m * (ceil_log2(static_cast<std::size_t>(m)) + log_ef) + popped * log_ef;
      }
      const double gather_us = gather_ops * core_us / tc.embedded_cores;
      sim.charge(ChargeCategory::Core, from_us(gather_us));

      for (const BlockRef& hot : sim.take_hot_blocks()) {
        store.refresh_block(hot.lun, hot.block, refresh_rng);
        sim.invalidate_latch(hot.lun, hot.block / store.geometry().blocks_per_plane);
        ++result.counters.refreshes;
      }
      t = search_end + from_us(gather_us);
    }
    if (!speculative.empty()) {
      sim.abort_speculative(std::max(t, sim.now()));
      for (const Issued& issued : speculative) attribute(issued);
      speculative.clear();
    }
    t = std::max(t, sim.now());
    sim.retire(sim.next_id());

    // Sorting overlaps the next pass's allocation.
    double sort_us = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
      QueryOutcome& out = result.queries[chunk[i]];
      std::vector<Neighbor> list = states[i].results();
      sort_us += tc.t_sort_base_us + tc.t_sort_per_item_us * padded_length(list.size());
      const auto k = static_cast<std::uint32_t>(std::min<std::size_t>(config.k, list.size()));
      out.topk = bitonic_topk(std::move(list), k);
      out.trace = states[i].trace();
      out.pass = pass;
    }
    sim.charge(ChargeCategory::Sort, from_us(sort_us));
    sorter_free = std::max(t, sorter_free) + from_us(sort_us);
    for (std::uint32_t q : chunk) result.queries[q].latency_us = to_us(sorter_free);
  }

  const SimTime makespan = std::max(t, sorter_free);
  result.counters.sim = sim.counters();
  result.charges = sim.charges();
  result.makespan_us = to_us(makespan);
  result.qps = result.makespan_us > 0.0
                   ? static_cast<double>(valid.size()) / (result.makespan_us * 1e-6)
                   : 0.0;
  result.event_log = sim.event_log_jsonl();
  return result;
}

std::string to_json(const BatchResult& result) {
  using nlohmann::ordered_json;
  ordered_json results = ordered_json::array();
  for (const QueryOutcome& q : result.queries) {
    ordered_json topk = ordered_json::array();
    for (const Neighbor& nb : q.topk) topk.push_back({nb.id, nb.distance});
    ordered_json row = {{"qid", q.query_id},
                        {"entry", q.entry},
                        {"faulted", q.faulted},
                        {"k_clamped", q.k_clamped},
                        {"topk", topk},
                        {"trace_length", q.trace.visited.size()},
                        {"page_reads", q.page_reads},
                        {"pass", q.pass},
                        {"latency_us", q.latency_us}};
    if (q.faulted) row["fault"] = q.fault;
    results.push_back(std::move(row));
  }
  ordered_json counters(result.counters.sim.as_map());
  counters["reused"] = result.counters.reused;
  counters["speculated"] = result.counters.speculated;
  counters["refreshes"] = result.counters.refreshes;
  counters["passes"] = result.counters.passes;
  counters["iterations"] = result.counters.iterations;
  counters["faulted"] = result.counters.faulted;
  ordered_json out = {{"results", results},
                      {"counters", counters},
                      {"breakdown", result.breakdown()},
                      {"makespan_us", result.makespan_us},
                      {"qps", result.qps}};
  return out.dump();
}

}  // namespace ndsim
