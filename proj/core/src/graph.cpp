#include "ndsim/graph.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "binio.hpp"
#include "ndsim/io.hpp"

namespace ndsim {

namespace {

constexpr std::string_view kGraphMagic = "LCSR0001";

struct FartherFirst {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(b, a); }
};
struct CloserFirst {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return closer(a, b); }
};

using CandidateQueue = std::priority_queue<Neighbor, std::vector<Neighbor>, FartherFirst>;
using ResultQueue = std::priority_queue<Neighbor, std::vector<Neighbor>, CloserFirst>;

// Visited marks that can be reset in O(1) between searches.
class VisitedStamps {
 public:
  explicit VisitedStamps(std::size_t n) : stamp_(n, 0) {}
  void next() {
    if (++epoch_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      epoch_ = 1;
    }
  }
  bool test_and_set(VertexId v) {
    if (stamp_[v] == epoch_) return true;
    stamp_[v] = epoch_;
    return false;
  }

 private:
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
};

template <class NeighborsFn, class DistFn>
std::vector<Neighbor> ef_search(VertexId entry, std::uint32_t ef, NeighborsFn&& neighbors_of,
                                DistFn&& dist, VisitedStamps& visited, SearchTrace* trace) {
  visited.next();
  visited.test_and_set(entry);
  const Neighbor first{entry, dist(entry)};
  if (trace) trace->visited.push_back(entry);

  CandidateQueue candidates;
  ResultQueue results;
  candidates.push(first);
  results.push(first);

  std::vector<Neighbor> scored;
  while (!candidates.empty()) {
    const Neighbor c = candidates.top();
    candidates.pop();
    if (results.size() >= ef && c.distance > results.top().distance) break;
    if (trace) trace->entries.push_back(c.id);

    scored.clear();
    for (VertexId u : neighbors_of(c.id)) {
      if (!visited.test_and_set(u)) scored.push_back({u, dist(u)});
    }
    std::sort(scored.begin(), scored.end(), closer);
    for (const Neighbor& nb : scored) {
      if (trace) trace->visited.push_back(nb.id);
      if (results.size() < ef || closer(nb, results.top())) {
        candidates.push(nb);
        results.push(nb);
        if (results.size() > ef) results.pop();
      }
    }
  }

  std::vector<Neighbor> out;
  out.reserve(results.size());
  while (!results.empty()) {
    out.push_back(results.top());
    results.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace

Graph::Graph(std::vector<std::uint64_t> offsets, std::vector<VertexId> neighbors,
             std::uint32_t max_degree, ErrorKind on_violation)
    : offsets_(std::move(offsets)), neighbors_(std::move(neighbors)), max_degree_(max_degree) {
  if (offsets_.empty()) offsets_.push_back(0);
  validate(on_violation);
}

Graph Graph::from_adjacency(std::vector<std::vector<VertexId>> adjacency,
                            std::uint32_t max_degree) {
  std::vector<std::uint64_t> offsets;
  offsets.reserve(adjacency.size() + 1);
  offsets.push_back(0);
  std::vector<VertexId> flat;
  for (auto& list : adjacency) {
    std::sort(list.begin(), list.end());
    flat.insert(flat.end(), list.begin(), list.end());
    offsets.push_back(flat.size());
  }
  return Graph(std::move(offsets), std::move(flat), max_degree);
}

void Graph::validate(ErrorKind kind) const {
  auto fail = [kind](const std::string& msg) { throw Error(kind, "graph invariant: " + msg); };
  if (max_degree_ < 1) fail("max degree must be positive");
  if (offsets_[0] != 0) fail("offsets[0] = " + std::to_string(offsets_[0]) + ", expected 0");
  const std::size_t n = size();
  for (std::size_t v = 0; v < n; ++v) {
    if (offsets_[v + 1] < offsets_[v]) {
      fail("offsets[" + std::to_string(v + 1) + "] = " + std::to_string(offsets_[v + 1]) +
           " decreases from " + std::to_string(offsets_[v]));
    }
  }
  if (offsets_[n] != neighbors_.size()) {
    fail("offsets[" + std::to_string(n) + "] = " + std::to_string(offsets_[n]) +
         " but neighbor array holds " + std::to_string(neighbors_.size()) + " entries");
  }
  for (std::size_t v = 0; v < n; ++v) {
    const auto vid = static_cast<VertexId>(v);
    if (degree(vid) > max_degree_) {
      fail("vertex " + std::to_string(v) + " has degree " + std::to_string(degree(vid)) +
           " > max degree " + std::to_string(max_degree_));
    }
    for (std::uint64_t pos = offsets_[v]; pos < offsets_[v + 1]; ++pos) {
      const VertexId u = neighbors_[pos];
      const std::string where = "neighbors[" + std::to_string(pos) + "] = " + std::to_string(u);
      if (u >= n) fail(where + " is out of range (n = " + std::to_string(n) + ")");
      if (u == v) fail(where + " is a self-loop");
      for (std::uint64_t q = offsets_[v]; q < pos; ++q) {
        if (neighbors_[q] == u) fail(where + " duplicates an earlier edge");
      }
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    for (std::uint64_t pos = offsets_[v]; pos < offsets_[v + 1]; ++pos) {
      const auto back = neighbors(neighbors_[pos]);
      if (std::find(back.begin(), back.end(), static_cast<VertexId>(v)) == back.end()) {
        fail("neighbors[" + std::to_string(pos) + "] = " + std::to_string(neighbors_[pos]) +
             ": edge from vertex " + std::to_string(v) + " has no reverse edge");
      }
    }
  }
}

void validate(const SearchParams& params) {
  if (params.ef < 1) throw Error(ErrorKind::Parameter, "ef must be positive");
  if (params.k < 1 || params.k > params.ef) {
    throw Error(ErrorKind::Parameter, "k = " + std::to_string(params.k) +
                                          " must satisfy 1 <= k <= ef = " + std::to_string(params.ef));
  }
}

VertexId resolve_entry(const SearchParams& params, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::Parameter, "cannot pick an entry vertex in an empty graph");
  if (const auto* fixed = std::get_if<VertexId>(&params.entry)) {
    if (*fixed >= n) {
      throw Error(ErrorKind::Range, "entry vertex " + std::to_string(*fixed) +
                                        " out of range (n = " + std::to_string(n) + ")");
    }
    return *fixed;
  }
  std::mt19937_64 rng(std::get<RandomEntry>(params.entry).seed);
  return static_cast<VertexId>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

namespace {

// Joins every component to the one holding vertex 0 through the closest pair
// of vertices that both have a free adjacency slot.
// Edges whose removal disconnects the graph, as (min, max) pairs.
std::set<std::pair<VertexId, VertexId>> find_bridges(const std::vector<std::vector<VertexId>>& adj) {
  const std::size_t n = adj.size();
  std::vector<std::uint32_t> order(n, 0), low(n, 0);
  std::uint32_t clock = 0;
  std::set<std::pair<VertexId, VertexId>> bridges;
  struct Frame {
    VertexId v, parent;
    std::size_t next;
  };
  for (VertexId root = 0; root < n; ++root) {
    if (order[root]) continue;
    std::vector<Frame> stack{{root, root, 0}};
    order[root] = low[root] = ++clock;
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < adj[f.v].size()) {
        const VertexId u = adj[f.v][f.next++];
        if (u == f.parent) continue;
        if (order[u]) {
          low[f.v] = std::min(low[f.v], order[u]);
        } else {
          order[u] = low[u] = ++clock;
          stack.push_back({u, f.v, 0});
        }
        continue;
      }
      const Frame done = f;
      stack.pop_back();
      if (stack.empty()) break;
      low[done.parent] = std::min(low[done.parent], low[done.v]);
      if (low[done.v] > order[done.parent]) {
        bridges.insert(std::minmax(done.v, done.parent));
      }
    }
  }
  return bridges;
}

void unlink(std::vector<std::vector<VertexId>>& adj, VertexId a, VertexId b) {
  std::erase(adj[a], b);
  std::erase(adj[b], a);
}

// Links every component to the one holding vertex 0 through its closest
// pair. A saturated endpoint first gives up its farthest edge that lies on a
// cycle, so the repair never disconnects anything else.
void connect_components(std::vector<std::vector<VertexId>>& adj, const VectorSet& vectors,
                        std::uint32_t max_degree, DistanceKind kind) {
  const std::size_t n = adj.size();
  if (max_degree < 2) return;
  std::vector<std::uint32_t> component(n, ~0u);
  std::uint32_t components = 0;
  for (std::size_t root = 0; root < n; ++root) {
    if (component[root] != ~0u) continue;
    std::vector<VertexId> stack{static_cast<VertexId>(root)};
    component[root] = components;
    while (!stack.empty()) {
      const VertexId v = stack.back();
      stack.pop_back();
      for (VertexId u : adj[v]) {
        if (component[u] == ~0u) {
          component[u] = components;
          stack.push_back(u);
        }
      }
    }
    ++components;
  }
  std::vector<std::vector<VertexId>> members(components);
  for (std::size_t v = 0; v < n; ++v) members[component[v]].push_back(static_cast<VertexId>(v));

  auto dist = [&](VertexId a, VertexId b) { return distance(kind, vectors.row(a), vectors.row(b)); };
  // Farthest neighbor of v reachable without edge (v, x), if any.
  auto spare_edge = [&](VertexId v, const std::set<std::pair<VertexId, VertexId>>& bridges)
      -> std::optional<VertexId> {
    std::optional<VertexId> best;
    float far = -1.0f;
    for (VertexId x : adj[v]) {
      if (bridges.count(std::minmax(v, x))) continue;
      const float d = dist(v, x);
      if (d > far) {
        far = d;
        best = x;
      }
    }
    return best;
  };

  for (std::uint32_t c = 1; c < components; ++c) {
    std::set<std::pair<VertexId, VertexId>> bridges;
    bool free_only = true;
    for (int attempt = 0; attempt < 2; ++attempt) {
      auto usable = [&](VertexId v) {
        return adj[v].size() < max_degree || (!free_only && spare_edge(v, bridges).has_value());
      };
      Neighbor best{0, std::numeric_limits<float>::infinity()};
      VertexId from = 0;
      for (VertexId a : members[c]) {
        if (!usable(a)) continue;
        for (VertexId b : members[0]) {
          if (!usable(b)) continue;
          const float d = dist(a, b);
          if (d < best.distance) {
            best = {b, d};
            from = a;
          }
        }
      }
      if (best.distance == std::numeric_limits<float>::infinity()) {
        if (attempt == 0) {
          bridges = find_bridges(adj);
          free_only = false;
        }
        continue;
      }
      for (VertexId v : {from, best.id}) {
        if (adj[v].size() >= max_degree) unlink(adj, v, *spare_edge(v, bridges));
      }
      adj[from].push_back(best.id);
      adj[best.id].push_back(from);
      members[0].insert(members[0].end(), members[c].begin(), members[c].end());
      break;
    }
  }
}

}  // namespace

Graph build_graph(const VectorSet& vectors, std::uint32_t max_degree,
                  std::uint32_t ef_construction, std::uint64_t seed, DistanceKind kind) {
  if (max_degree < 1) throw Error(ErrorKind::Parameter, "max degree R must be >= 1");
  if (ef_construction < 1) throw Error(ErrorKind::Parameter, "ef_construction must be >= 1");
  const std::size_t n = vectors.count();
  if (n == 0) throw Error(ErrorKind::Parameter, "cannot build a graph over zero vectors");

  std::vector<std::vector<VertexId>> adj(n);
  // Each inserted vertex keeps its edge to the nearest earlier vertex found,
  // so the kept edges form a spanning tree that pruning leaves alone.
  std::vector<VertexId> parent(n, ~VertexId{0});
  auto is_tree_edge = [&](VertexId a, VertexId b) { return parent[a] == b || parent[b] == a; };
  VisitedStamps visited(n);
  std::mt19937_64 rng(seed);

  for (std::size_t i = 1; i < n; ++i) {
    const auto query = vectors.row(i);
    auto dist = [&](VertexId u) { return distance(kind, query, vectors.row(u)); };
    const auto entry =
        static_cast<VertexId>(std::uniform_int_distribution<std::size_t>(0, i - 1)(rng));
    auto found = ef_search(
        entry, ef_construction,
        [&](VertexId u) -> const std::vector<VertexId>& { return adj[u]; }, dist, visited,
        nullptr);
    if (found.size() > max_degree) found.resize(max_degree);

    const auto self = static_cast<VertexId>(i);
    parent[self] = found.front().id;
    for (const Neighbor& nb : found) {
      adj[self].push_back(nb.id);
      adj[nb.id].push_back(self);
    }
    for (const Neighbor& nb : found) {
      auto& list = adj[nb.id];
      if (list.size() <= max_degree) continue;
      const auto base = vectors.row(nb.id);
      std::optional<Neighbor> worst, worst_any;
      for (VertexId w : list) {
        const Neighbor cand{w, distance(kind, base, vectors.row(w))};
        if (!worst_any || closer(*worst_any, cand)) worst_any = cand;
        if (!is_tree_edge(nb.id, w) && (!worst || closer(*worst, cand))) worst = cand;
      }
      const VertexId drop = worst ? worst->id : worst_any->id;
      std::erase(list, drop);
      std::erase(adj[drop], nb.id);
    }
  }
  connect_components(adj, vectors, max_degree, kind);
  return Graph::from_adjacency(std::move(adj), max_degree);
}

SearchResult beam_search(const Graph& graph, const VectorSet& vectors, const VectorRef& query,
                         const SearchParams& params, std::uint64_t query_id) {
  if (graph.empty()) throw Error(ErrorKind::Parameter, "beam search on an empty graph");
  validate(params);
  if (dim_of(query) != vectors.dim()) {
    throw Error(ErrorKind::Dimension, "query has dimension " + std::to_string(dim_of(query)) +
                                          ", dataset has " + std::to_string(vectors.dim()));
  }
  const VertexId entry = resolve_entry(params, graph.size());

  SearchResult out;
  out.trace.query_id = query_id;
  VisitedStamps visited(graph.size());
  auto dist = [&](VertexId u) { return distance(params.kind, query, vectors.row(u)); };
  auto results = ef_search(
      entry, params.ef, [&](VertexId u) { return graph.neighbors(u); }, dist, visited,
      &out.trace);
  if (params.k > graph.size()) out.k_clamped = true;
  if (results.size() > params.k) results.resize(params.k);
  out.topk = std::move(results);
  return out;
}

std::vector<std::uint8_t> encode_graph(const Graph& graph) {
  detail::ByteWriter out;
  out.magic(kGraphMagic);
  out.u64(graph.size());
  out.u64(graph.edge_entries());
  for (auto off : graph.offsets()) out.u64(off);
  for (auto nb : graph.neighbor_array()) out.u32(nb);
  out.crc_trailer();
  return std::move(out.bytes());
}

Graph decode_graph(std::span<const std::uint8_t> bytes) {
  detail::ByteReader in(bytes, "graph container");
  in.expect_magic(kGraphMagic, ErrorKind::Artifact);
  const std::uint64_t n = in.u64();
  const std::uint64_t edges = in.u64();
  if (n > in.remaining() / 8 || edges > in.remaining() / 4 ||
      (n + 1) * 8 + edges * 4 + 4 != in.remaining()) {
    throw Error(ErrorKind::Parse, "graph container: header declares n = " + std::to_string(n) +
                                      ", edges = " + std::to_string(edges) +
                                      " inconsistent with " + std::to_string(in.remaining()) +
                                      " remaining bytes at offset " + std::to_string(in.offset()));
  }
  std::vector<std::uint64_t> offsets(n + 1);
  for (auto& off : offsets) off = in.u64();
  std::vector<VertexId> neighbors(edges);
  for (auto& nb : neighbors) nb = in.u32();
  in.verify_crc_trailer();

  std::uint32_t max_degree = 1;
  for (std::uint64_t v = 0; v < n; ++v) {
    if (offsets[v + 1] >= offsets[v]) {
      max_degree = std::max<std::uint32_t>(max_degree,
                                           static_cast<std::uint32_t>(offsets[v + 1] - offsets[v]));
    }
  }
  return Graph(std::move(offsets), std::move(neighbors), max_degree, ErrorKind::Load);
}

void save_graph(const Graph& graph, const std::filesystem::path& path) {
  write_file_atomic(path, encode_graph(graph));
}

Graph load_graph(const std::filesystem::path& path) { return decode_graph(read_file_bytes(path)); }

std::string trace_to_json_line(const SearchTrace& trace) {
  std::ostringstream out;
  out << "{\"qid\":" << trace.query_id << ",\"entries\":[";
  for (std::size_t i = 0; i < trace.entries.size(); ++i) out << (i ? "," : "") << trace.entries[i];
  out << "],\"visited\":[";
  for (std::size_t i = 0; i < trace.visited.size(); ++i) out << (i ? "," : "") << trace.visited[i];
  out << "]}";
  return out.str();
}

Graph make_small_world(std::size_t n, std::uint32_t k, double p, std::uint64_t seed) {
  if (k == 0 || k % 2 != 0 || k >= n) {
    throw Error(ErrorKind::Parameter, "small-world lattice degree k must be even and < n");
  }
  std::vector<std::vector<VertexId>> adj(n);
  auto has_edge = [&](VertexId a, VertexId b) {
    return std::find(adj[a].begin(), adj[a].end(), b) != adj[a].end();
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 1; j <= k / 2; ++j) {
      const auto a = static_cast<VertexId>(i);
      const auto b = static_cast<VertexId>((i + j) % n);
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::uint32_t j = 1; j <= k / 2; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      if (coin(rng) >= p) continue;
      const auto a = static_cast<VertexId>(i);
      const auto b = static_cast<VertexId>((i + j) % n);
      if (!has_edge(a, b)) continue;
      const auto c = static_cast<VertexId>(pick(rng));
      if (c == a || has_edge(a, c)) continue;
      std::erase(adj[a], b);
      std::erase(adj[b], a);
      adj[a].push_back(c);
      adj[c].push_back(a);
    }
  }
  std::uint32_t max_degree = 1;
  for (const auto& list : adj) max_degree = std::max<std::uint32_t>(max_degree, list.size());
  return Graph::from_adjacency(std::move(adj), max_degree);
}

}  // namespace ndsim
