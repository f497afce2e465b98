#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "hahe/errors.hpp"

namespace hahe {

// Heterogeneous graph with typed nodes and edges. Edges are semantically
// undirected: each input line is stored once as written, and traversal code
// treats both orientations as reachable. Immutable after load.
struct TypedGraph {
  struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    int type = -1;
  };

  std::vector<std::string> node_type_names;  // type index -> name
  std::vector<std::string> edge_type_names;
  std::vector<std::string> node_ids;  // node index -> id, in file order
  std::vector<int> node_type_of;     // node index -> node type index
  std::vector<Edge> edges;
  std::vector<std::string> label_names;     // label index -> name
  std::vector<std::vector<int>> labels_of;  // node index -> sorted label set
  // Allowed (src type, edge type, dst type) triples, both orientations.
  std::set<std::tuple<int, int, int>> schema;

  std::unordered_map<std::string, std::size_t> id_to_index;
  std::unordered_map<std::string, int> node_type_index;
  std::unordered_map<std::string, int> edge_type_index;

  std::size_t node_count() const { return node_ids.size(); }
  std::size_t edge_count() const { return edges.size(); }
  std::size_t label_class_count() const { return label_names.size(); }

  // -1 when the name is unknown.
  int node_type_id(std::string_view name) const {
    auto it = node_type_index.find(std::string(name));
    return it == node_type_index.end() ? -1 : it->second;
  }
  int edge_type_id(std::string_view name) const {
    auto it = edge_type_index.find(std::string(name));
    return it == edge_type_index.end() ? -1 : it->second;
  }
};

// Dense re-indexing of all nodes of one type, in node order. Bijective:
// nodes[p] is the graph index of target position p, pos_of inverts it.
struct TargetSet {
  int type = -1;
  std::string type_name;
  std::vector<std::size_t> nodes;      // target position -> node index
  std::vector<std::ptrdiff_t> pos_of;  // node index -> position, -1 if other

  std::size_t size() const { return nodes.size(); }
};

namespace detail {

inline std::vector<std::string> split_tab(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

// Strips a trailing '\r' so CRLF files load the same as LF files.
inline void chomp(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline bool skippable(const std::string& line) {
  return line.empty() || line[0] == '#';
}

inline int intern(std::vector<std::string>& names,
                  std::unordered_map<std::string, int>& index,
                  const std::string& name) {
  auto it = index.find(name);
  if (it != index.end()) return it->second;
  int id = static_cast<int>(names.size());
  names.push_back(name);
  index.emplace(name, id);
  return id;
}

}  // namespace detail

// Reads the three TSV files into a validated TypedGraph. The labels file is
// optional. The schema is accumulated from the data: every observed
// (src type, edge type, dst type) triple is recorded in both orientations.
inline TypedGraph load_graph(const std::string& nodes_path,
                             const std::string& edges_path,
                             const std::optional<std::string>& labels_path =
                                 std::nullopt) {
  TypedGraph g;

  std::ifstream nodes_in(nodes_path);
  if (!nodes_in) throw DataError("cannot open nodes file: " + nodes_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(nodes_in, line)) {
    ++lineno;
    detail::chomp(line);
    if (detail::skippable(line)) continue;
    auto fields = detail::split_tab(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw DataError(nodes_path + " line " + std::to_string(lineno) +
                      ": expected node_id<TAB>type_name");
    }
    if (g.id_to_index.count(fields[0])) {
      throw DataError(nodes_path + " line " + std::to_string(lineno) +
                      ": duplicate node id '" + fields[0] + "'");
    }
    g.id_to_index.emplace(fields[0], g.node_ids.size());
    g.node_ids.push_back(fields[0]);
    g.node_type_of.push_back(
        detail::intern(g.node_type_names, g.node_type_index, fields[1]));
  }
  g.labels_of.assign(g.node_count(), {});

  std::ifstream edges_in(edges_path);
  if (!edges_in) throw DataError("cannot open edges file: " + edges_path);
  lineno = 0;
  while (std::getline(edges_in, line)) {
    ++lineno;
    detail::chomp(line);
    if (detail::skippable(line)) continue;
    auto fields = detail::split_tab(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() ||
        fields[2].empty()) {
      throw DataError(edges_path + " line " + std::to_string(lineno) +
                      ": expected src_id<TAB>dst_id<TAB>edge_type");
    }
    auto src = g.id_to_index.find(fields[0]);
    if (src == g.id_to_index.end()) {
      throw DataError(edges_path + " line " + std::to_string(lineno) +
                      ": unknown node id '" + fields[0] + "'");
    }
    auto dst = g.id_to_index.find(fields[1]);
    if (dst == g.id_to_index.end()) {
      throw DataError(edges_path + " line " + std::to_string(lineno) +
                      ": unknown node id '" + fields[1] + "'");
    }
    int et = detail::intern(g.edge_type_names, g.edge_type_index, fields[2]);
    g.edges.push_back({src->second, dst->second, et});
    int st = g.node_type_of[src->second];
    int dt = g.node_type_of[dst->second];
    g.schema.insert({st, et, dt});
    g.schema.insert({dt, et, st});
  }

  if (labels_path) {
    std::ifstream labels_in(*labels_path);
    if (!labels_in) throw DataError("cannot open labels file: " + *labels_path);
    lineno = 0;
    int labeled_type = -1;
    std::unordered_map<std::string, int> label_index;
    while (std::getline(labels_in, line)) {
      ++lineno;
      detail::chomp(line);
      if (detail::skippable(line)) continue;
      auto fields = detail::split_tab(line);
      if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
        throw DataError(*labels_path + " line " + std::to_string(lineno) +
                        ": expected node_id<TAB>label[,label...]");
      }
      auto node = g.id_to_index.find(fields[0]);
      if (node == g.id_to_index.end()) {
        throw DataError(*labels_path + " line " + std::to_string(lineno) +
                        ": unknown node id '" + fields[0] + "'");
      }
      // Labeled nodes must all share one node type; it becomes the only
      // admissible target type for training.
      int nt = g.node_type_of[node->second];
      if (labeled_type == -1) {
        labeled_type = nt;
      } else if (nt != labeled_type) {
        throw DataError(*labels_path + " line " + std::to_string(lineno) +
                        ": label on node '" + fields[0] + "' of type '" +
                        g.node_type_names[nt] +
                        "' but earlier labels are on type '" +
                        g.node_type_names[labeled_type] + "'");
      }
      if (!g.labels_of[node->second].empty()) {
        throw DataError(*labels_path + " line " + std::to_string(lineno) +
                        ": node '" + fields[0] + "' labeled twice");
      }
      std::vector<int> labels;
      std::stringstream ss(fields[1]);
      std::string item;
      while (std::getline(ss, item, ',')) {
        if (item.empty()) {
          throw DataError(*labels_path + " line " + std::to_string(lineno) +
                          ": empty label");
        }
        labels.push_back(detail::intern(g.label_names, label_index, item));
      }
      std::sort(labels.begin(), labels.end());
      labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
      g.labels_of[node->second] = std::move(labels);
    }
  }

  return g;
}

// Writes a graph back to the TSV formats load_graph reads. Node order, edge
// order, and label sets survive a round trip exactly.
inline void save_graph(const TypedGraph& g, const std::string& nodes_path,
                       const std::string& edges_path,
                       const std::optional<std::string>& labels_path =
                           std::nullopt) {
  std::ofstream nodes_out(nodes_path);
  if (!nodes_out) throw DataError("cannot write nodes file: " + nodes_path);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    nodes_out << g.node_ids[i] << '\t'
              << g.node_type_names[g.node_type_of[i]] << '\n';
  }

  std::ofstream edges_out(edges_path);
  if (!edges_out) throw DataError("cannot write edges file: " + edges_path);
  for (const auto& e : g.edges) {
    edges_out << g.node_ids[e.src] << '\t' << g.node_ids[e.dst] << '\t'
              << g.edge_type_names[e.type] << '\n';
  }

  if (labels_path) {
    std::ofstream labels_out(*labels_path);
    if (!labels_out)
      throw DataError("cannot write labels file: " + *labels_path);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      if (g.labels_of[i].empty()) continue;
      labels_out << g.node_ids[i] << '\t';
      for (std::size_t j = 0; j < g.labels_of[i].size(); ++j) {
        if (j) labels_out << ',';
        labels_out << g.label_names[g.labels_of[i][j]];
      }
      labels_out << '\n';
    }
  }
}

// Densely re-indexes the nodes of one type, preserving node order.
inline TargetSet select_target(const TypedGraph& g,
                               const std::string& type_name) {
  TargetSet ts;
  ts.type = g.node_type_id(type_name);
  ts.type_name = type_name;
  if (ts.type == -1) {
    throw DataError("unknown node type '" + type_name + "'");
  }
  ts.pos_of.assign(g.node_count(), -1);
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (g.node_type_of[i] == ts.type) {
      ts.pos_of[i] = static_cast<std::ptrdiff_t>(ts.nodes.size());
      ts.nodes.push_back(i);
    }
  }
  if (ts.nodes.empty()) {
    throw DataError("no nodes of type '" + type_name + "'");
  }
  return ts;
}

// Labels may only sit on nodes of the declared target type.
inline void validate_labels_on(const TypedGraph& g, const TargetSet& target) {
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (!g.labels_of[i].empty() && g.node_type_of[i] != target.type) {
      throw DataError("label on node '" + g.node_ids[i] + "' of type '" +
                      g.node_type_names[g.node_type_of[i]] +
                      "' but target type is '" + target.type_name + "'");
    }
  }
}

}  // namespace hahe
