#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hahe/errors.hpp"
#include "hahe/graph.hpp"
#include "hahe/rng.hpp"

namespace hahe {

// One content-node pool family per meta path. Signal strength is the gap
// between intra and inter; intra == inter plants no signal on that path.
struct SynthPathConfig {
  std::size_t n_content = 100;
  double intra = 0.8;
  double inter = 0.05;
};

struct SynthConfig {
  std::size_t n_target = 300;
  std::size_t n_classes = 2;
  std::vector<SynthPathConfig> paths;
  std::uint64_t seed = 0;
};

struct SynthResult {
  TypedGraph graph;
  // Comma-form specs, one per configured path, e.g. "T,C0,T".
  std::vector<std::string> metapaths;
};

// Builds a typed graph whose class structure lives only in 2-hop meta paths:
// target nodes get classes round-robin, each path contributes a fresh content
// type split into per-class pools, and each target links to pool members of
// its own class with probability intra and to others with inter. There are
// no target-target edges, so no 1-hop shortcut exists.
inline SynthResult generate_planted_hin(const SynthConfig& cfg) {
  if (cfg.n_target == 0) throw DataError("synth config: n_target must be positive");
  if (cfg.n_classes == 0) throw DataError("synth config: n_classes must be positive");
  for (std::size_t p = 0; p < cfg.paths.size(); ++p) {
    const auto& pc = cfg.paths[p];
    if (pc.n_content == 0)
      throw DataError("synth config: path " + std::to_string(p) +
                      " has no content nodes");
    if (pc.intra < 0.0 || pc.intra > 1.0 || pc.inter < 0.0 || pc.inter > 1.0)
      throw DataError("synth config: path " + std::to_string(p) +
                      " probabilities must lie in [0, 1]");
  }

  SynthResult out;
  TypedGraph& g = out.graph;

  const int target_type = detail::intern(g.node_type_names, g.node_type_index, "T");
  for (std::size_t i = 0; i < cfg.n_target; ++i) {
    g.id_to_index["t" + std::to_string(i)] = g.node_ids.size();
    g.node_ids.push_back("t" + std::to_string(i));
    g.node_type_of.push_back(target_type);
  }

  Rng rng(cfg.seed, "synth");
  for (std::size_t p = 0; p < cfg.paths.size(); ++p) {
    const auto& pc = cfg.paths[p];
    const std::string ctype_name = "C" + std::to_string(p);
    const int ctype =
        detail::intern(g.node_type_names, g.node_type_index, ctype_name);
    const int etype = detail::intern(g.edge_type_names, g.edge_type_index,
                                     "T" + ctype_name);
    g.schema.insert({target_type, etype, ctype});
    g.schema.insert({ctype, etype, target_type});

    std::vector<std::size_t> content_index;
    for (std::size_t j = 0; j < pc.n_content; ++j) {
      std::string id = "c" + std::to_string(p) + "_" + std::to_string(j);
      content_index.push_back(g.node_ids.size());
      g.id_to_index[id] = g.node_ids.size();
      g.node_ids.push_back(std::move(id));
      g.node_type_of.push_back(ctype);
    }

    for (std::size_t i = 0; i < cfg.n_target; ++i) {
      const std::size_t cls = i % cfg.n_classes;
      for (std::size_t j = 0; j < pc.n_content; ++j) {
        const double prob = (j % cfg.n_classes == cls) ? pc.intra : pc.inter;
        if (rng.bernoulli(prob))
          g.edges.push_back({i, content_index[j], etype});
      }
    }

    out.metapaths.push_back("T," + ctype_name + ",T");
  }

  g.labels_of.assign(g.node_ids.size(), {});
  std::unordered_map<std::string, int> label_index;
  for (std::size_t c = 0; c < cfg.n_classes; ++c)
    detail::intern(g.label_names, label_index, "class" + std::to_string(c));
  for (std::size_t i = 0; i < cfg.n_target; ++i)
    g.labels_of[i] = {static_cast<int>(i % cfg.n_classes)};

  return out;
}

}  // namespace hahe
