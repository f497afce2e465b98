#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hahe/errors.hpp"
#include "hahe/graph.hpp"
#include "hahe/rng.hpp"

namespace hahe {

// Node-type sequence o_1..o_m with both endpoints on the target type. Edge
// types are not part of the path; any edge whose endpoint types match a
// consecutive pair can carry a step.
struct MetaPath {
  std::vector<int> types;  // node type indices
  std::string name;        // canonical display form
};

// N_T x N_T path-instance counts between target nodes, sparse rows sorted by
// column. Instances are walks: revisiting nodes is allowed, and an instance
// is identified by its node sequence, so parallel edges do not multiply it.
struct PathCounts {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, std::int64_t>>> rows;

  std::int64_t at(std::size_t i, std::size_t j) const {
    for (const auto& [col, cnt] : rows[i])
      if (col == j) return cnt;
    return 0;
  }
};

// Row-normalized counts; each nonzero row sums to 1 (L1), zero rows stay
// zero (node isolated under the path).
struct NormalizedAdjacency {
  std::size_t n = 0;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;

  double at(std::size_t i, std::size_t j) const {
    for (const auto& [col, v] : rows[i])
      if (col == j) return v;
    return 0.0;
  }

  // Writes row i into out[0..n), zero-filled first.
  void fill_dense_row(std::size_t i, double* out) const {
    std::fill(out, out + n, 0.0);
    for (const auto& [col, v] : rows[i]) out[col] = v;
  }
};

// Accepts "APA" (single-letter type names) or "A,P,A". Endpoints must be the
// target type and every consecutive pair must be joinable by some edge triple
// in the schema.
inline MetaPath parse_metapath(const TypedGraph& g, const std::string& spec,
                               const std::string& target_type) {
  std::vector<std::string> parts;
  if (spec.find(',') != std::string::npos) {
    std::size_t start = 0;
    while (true) {
      std::size_t comma = spec.find(',', start);
      parts.push_back(spec.substr(start, comma == std::string::npos
                                             ? std::string::npos
                                             : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  } else {
    for (char c : spec) parts.emplace_back(1, c);
  }

  MetaPath path;
  for (const auto& part : parts) {
    int t = g.node_type_id(part);
    if (t == -1) {
      throw DataError("meta path '" + spec + "': unknown node type '" + part +
                      "'");
    }
    path.types.push_back(t);
  }
  if (path.types.size() < 2) {
    throw DataError("meta path '" + spec + "': needs at least 2 types");
  }

  int target = g.node_type_id(target_type);
  if (target == -1) throw DataError("unknown node type '" + target_type + "'");
  if (path.types.front() != target || path.types.back() != target) {
    throw DataError("meta path '" + spec + "': endpoints must be target type '" +
                    target_type + "'");
  }

  for (std::size_t i = 0; i + 1 < path.types.size(); ++i) {
    bool joinable = false;
    for (const auto& [st, et, dt] : g.schema) {
      if (st == path.types[i] && dt == path.types[i + 1]) {
        joinable = true;
        break;
      }
    }
    if (!joinable) {
      throw DataError("meta path '" + spec + "': no edge connects type '" +
                      g.node_type_names[path.types[i]] + "' to type '" +
                      g.node_type_names[path.types[i + 1]] + "'");
    }
  }

  bool single_letter = true;
  for (const auto& part : parts) single_letter &= part.size() == 1;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i && !single_letter) path.name += ',';
    path.name += parts[i];
  }
  return path;
}

namespace detail {

// Per-node sorted unique neighbor lists over undirected edges.
inline std::vector<std::vector<std::size_t>> adjacency(const TypedGraph& g) {
  std::vector<std::vector<std::size_t>> adj(g.node_count());
  for (const auto& e : g.edges) {
    adj[e.src].push_back(e.dst);
    adj[e.dst].push_back(e.src);
  }
  for (auto& nbrs : adj) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
  return adj;
}

inline std::int64_t checked_mul(std::int64_t a, std::int64_t b,
                                const std::string& path_name) {
  std::int64_t out;
  if (__builtin_mul_overflow(a, b, &out)) {
    throw NumericError("path count overflow for meta path '" + path_name +
                       "'");
  }
  return out;
}

inline std::int64_t checked_add(std::int64_t a, std::int64_t b,
                                const std::string& path_name) {
  std::int64_t out;
  if (__builtin_add_overflow(a, b, &out)) {
    throw NumericError("path count overflow for meta path '" + path_name +
                       "'");
  }
  return out;
}

}  // namespace detail

// Counts walks v_1..v_m whose node types follow the path, as the chain
// product of typed biadjacency matrices, evaluated left to right with sparse
// rows. Self-counts stay on the diagonal; neighbor_sets strips them later.
inline PathCounts commuting_matrix(const TypedGraph& g, const TargetSet& target,
                                   const MetaPath& path) {
  auto adj = detail::adjacency(g);
  PathCounts out;
  out.n = target.size();
  out.rows.resize(out.n);

  for (std::size_t i = 0; i < target.size(); ++i) {
    // frontier: global node index -> walk count, advanced one step at a time.
    std::unordered_map<std::size_t, std::int64_t> frontier;
    frontier.emplace(target.nodes[i], 1);
    for (std::size_t step = 0; step + 1 < path.types.size(); ++step) {
      const int next_type = path.types[step + 1];
      std::unordered_map<std::size_t, std::int64_t> next;
      for (const auto& [u, cnt] : frontier) {
        for (std::size_t v : adj[u]) {
          if (g.node_type_of[v] != next_type) continue;
          auto [it, inserted] = next.emplace(v, cnt);
          if (!inserted)
            it->second = detail::checked_add(it->second, cnt, path.name);
        }
      }
      frontier = std::move(next);
      if (frontier.empty()) break;
    }
    auto& row = out.rows[i];
    for (const auto& [v, cnt] : frontier) {
      row.emplace_back(static_cast<std::size_t>(target.pos_of[v]), cnt);
    }
    std::sort(row.begin(), row.end());
  }
  return out;
}

// Exhaustive DFS over typed steps; counts complete walks from src to dst.
// Reference oracle for commuting_matrix; guarded by a partial-path budget.
inline std::int64_t enumerate_bruteforce(const TypedGraph& g,
                                         const TargetSet& target,
                                         const MetaPath& path, std::size_t src,
                                         std::size_t dst,
                                         std::size_t budget = 1000000) {
  auto adj = detail::adjacency(g);
  const std::size_t dst_node = target.nodes[dst];
  std::size_t expansions = 0;
  std::int64_t count = 0;

  auto dfs = [&](auto&& self, std::size_t node, std::size_t depth) -> void {
    if (++expansions > budget) {
      throw NumericError("enumerate_bruteforce: expansion budget exceeded");
    }
    if (depth + 1 == path.types.size()) {
      if (node == dst_node) ++count;
      return;
    }
    const int next_type = path.types[depth + 1];
    for (std::size_t v : adj[node]) {
      if (g.node_type_of[v] == next_type) self(self, v, depth + 1);
    }
  };
  dfs(dfs, target.nodes[src], 0);
  return count;
}

// L1 row normalization: nonzero rows sum to 1, zero rows stay zero.
inline NormalizedAdjacency normalize_rows(const PathCounts& counts) {
  NormalizedAdjacency out;
  out.n = counts.n;
  out.rows.resize(counts.n);
  for (std::size_t i = 0; i < counts.n; ++i) {
    std::int64_t total = 0;
    for (const auto& [col, cnt] : counts.rows[i]) total += cnt;
    if (total == 0) continue;
    out.rows[i].reserve(counts.rows[i].size());
    for (const auto& [col, cnt] : counts.rows[i]) {
      out.rows[i].emplace_back(col, static_cast<double>(cnt) /
                                        static_cast<double>(total));
    }
  }
  return out;
}

// Real-valued overload; normalizing an already normalized matrix is the
// identity up to rounding.
inline NormalizedAdjacency normalize_rows(const NormalizedAdjacency& a) {
  NormalizedAdjacency out;
  out.n = a.n;
  out.rows.resize(a.n);
  for (std::size_t i = 0; i < a.n; ++i) {
    double total = 0.0;
    for (const auto& [col, v] : a.rows[i]) total += v;
    if (total == 0.0) continue;
    out.rows[i].reserve(a.rows[i].size());
    for (const auto& [col, v] : a.rows[i])
      out.rows[i].emplace_back(col, v / total);
  }
  return out;
}

// N_i = { j != i : count(i,j) > 0 }, sorted ascending.
inline std::vector<std::vector<std::size_t>> neighbor_sets(
    const PathCounts& counts) {
  std::vector<std::vector<std::size_t>> out(counts.n);
  for (std::size_t i = 0; i < counts.n; ++i) {
    for (const auto& [col, cnt] : counts.rows[i]) {
      if (col != i && cnt > 0) out[i].push_back(col);
    }
  }
  return out;
}

// Content hash covering node ids/types, edges, and edge types; keys the
// count-matrix cache so a stale sidecar can never be replayed against a
// modified graph.
inline std::uint64_t graph_content_hash(const TypedGraph& g) {
  std::uint64_t h = 1469598103934665603ull;
  auto feed = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    feed(g.node_ids[i]);
    feed(g.node_type_names[g.node_type_of[i]]);
  }
  for (const auto& e : g.edges) {
    feed(g.node_ids[e.src]);
    feed(g.node_ids[e.dst]);
    feed(g.edge_type_names[e.type]);
  }
  return h;
}

namespace detail {

inline constexpr char kCacheMagic[8] = {'H', 'A', 'H', 'E',
                                        'P', 'C', 'M', '1'};

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
bool get(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return bool(in);
}

}  // namespace detail

// Binary sidecar holding one path's count matrix, keyed by graph hash and
// path name.
inline void save_counts_cache(const std::string& file, std::uint64_t graph_hash,
                              const std::string& path_name,
                              const PathCounts& counts) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write cache file: " + file);
  out.write(detail::kCacheMagic, sizeof(detail::kCacheMagic));
  detail::put(out, graph_hash);
  detail::put(out, static_cast<std::uint32_t>(path_name.size()));
  out.write(path_name.data(), static_cast<std::streamsize>(path_name.size()));
  detail::put(out, static_cast<std::uint64_t>(counts.n));
  for (const auto& row : counts.rows) {
    detail::put(out, static_cast<std::uint64_t>(row.size()));
    for (const auto& [col, cnt] : row) {
      detail::put(out, static_cast<std::uint64_t>(col));
      detail::put(out, cnt);
    }
  }
}

// Empty when the file is missing or keyed to a different graph or path.
// A corrupt or truncated file is a data error.
inline std::optional<PathCounts> try_load_counts_cache(
    const std::string& file, std::uint64_t graph_hash,
    const std::string& path_name) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, detail::kCacheMagic, sizeof(magic)) != 0) {
    throw DataError("not a path-count cache file: " + file);
  }
  std::uint64_t stored_hash;
  std::uint32_t name_len;
  if (!detail::get(in, stored_hash) || !detail::get(in, name_len)) {
    throw DataError("truncated cache file: " + file);
  }
  std::string stored_name(name_len, '\0');
  in.read(stored_name.data(), name_len);
  if (!in) throw DataError("truncated cache file: " + file);
  if (stored_hash != graph_hash || stored_name != path_name)
    return std::nullopt;

  PathCounts counts;
  std::uint64_t n;
  if (!detail::get(in, n)) throw DataError("truncated cache file: " + file);
  counts.n = n;
  counts.rows.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t nnz;
    if (!detail::get(in, nnz)) throw DataError("truncated cache file: " + file);
    counts.rows[i].reserve(nnz);
    for (std::uint64_t k = 0; k < nnz; ++k) {
      std::uint64_t col;
      std::int64_t cnt;
      if (!detail::get(in, col) || !detail::get(in, cnt)) {
        throw DataError("truncated cache file: " + file);
      }
      counts.rows[i].emplace_back(col, cnt);
    }
  }
  return counts;
}

}  // namespace hahe
