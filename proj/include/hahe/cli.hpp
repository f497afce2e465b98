#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hahe/checkpoint.hpp"
#include "hahe/errors.hpp"
#include "hahe/eval.hpp"
#include "hahe/graph.hpp"
#include "hahe/metapath.hpp"
#include "hahe/synth.hpp"
#include "hahe/train.hpp"

namespace hahe {
namespace cli {

struct GraphArgs {
  std::string nodes;
  std::string edges;
  std::string labels;  // optional
  std::string target_type;
  std::vector<std::string> metapaths;
  std::string cache_dir;
};

inline void add_graph_options(CLI::App* cmd, GraphArgs& args,
                              bool multiple_paths) {
  cmd->add_option("--nodes", args.nodes, "node TSV: id<TAB>type")->required();
  cmd->add_option("--edges", args.edges, "edge TSV: src<TAB>dst<TAB>type")
      ->required();
  cmd->add_option("--labels", args.labels, "label TSV: id<TAB>label[,label]");
  cmd->add_option("--target-type", args.target_type,
                  "node type to embed and classify")
      ->required();
  auto* mp = cmd->add_option("--metapath", args.metapaths,
                             "meta path spec, e.g. APA or movie,actor,movie");
  mp->required();
  if (!multiple_paths) mp->expected(1);
  cmd->add_option("--cache-dir", args.cache_dir,
                  "directory for path-count cache files");
}

inline TypedGraph load_graph_args(const GraphArgs& args) {
  if (args.labels.empty()) return load_graph(args.nodes, args.edges);
  return load_graph(args.nodes, args.edges, args.labels);
}

// Computes one path-count matrix, going through the sidecar cache when a
// cache directory is configured.
inline PathCounts counts_with_cache(const TypedGraph& g, const TargetSet& target,
                                    const MetaPath& path,
                                    const std::string& cache_dir) {
  if (cache_dir.empty()) return commuting_matrix(g, target, path);
  const std::uint64_t hash = graph_content_hash(g);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx",
                static_cast<unsigned long long>(hash));
  const std::string file = cache_dir + "/" + hex + "_" + path.name + ".pcm";
  if (auto hit = try_load_counts_cache(file, hash, path.name)) return *hit;
  PathCounts counts = commuting_matrix(g, target, path);
  std::filesystem::create_directories(cache_dir);
  save_counts_cache(file, hash, path.name, counts);
  return counts;
}

inline SynthPathConfig parse_path_triple(const std::string& spec) {
  std::vector<std::string> parts;
  std::string cur;
  for (char ch : spec) {
    if (ch == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  parts.push_back(cur);
  if (parts.size() != 3)
    throw DataError("--path expects COUNT,INTRA,INTER, got '" + spec + "'");
  SynthPathConfig out;
  out.n_content = static_cast<std::size_t>(
      detail::parse_count(parts[0], "--path '" + spec + "'"));
  out.intra = detail::parse_real(parts[1], "--path '" + spec + "'");
  out.inter = detail::parse_real(parts[2], "--path '" + spec + "'");
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DataError("cannot write '" + path + "'");
}

struct TrainArgs {
  GraphArgs graph;
  std::string config_file;
  std::string out;
  std::uint64_t seed = 0;
  std::string fusion;
  std::size_t feature_depth = 1;
  double threshold = 0.5;
};

inline void run_train(const TrainArgs& args, bool seed_set, bool fusion_set,
                      bool depth_set, bool threshold_set) {
  TrainConfig cfg;
  if (!args.config_file.empty()) cfg = load_train_config(args.config_file);
  if (seed_set) cfg.seed = args.seed;
  if (fusion_set) cfg.fusion = parse_fusion(args.fusion);
  if (depth_set) cfg.feature_depth = args.feature_depth;
  if (threshold_set) cfg.threshold = args.threshold;

  TypedGraph g = load_graph_args(args.graph);
  TargetSet target = select_target(g, args.graph.target_type);
  std::vector<PathCounts> counts;
  for (const auto& spec : args.graph.metapaths) {
    MetaPath path = parse_metapath(g, spec, args.graph.target_type);
    counts.push_back(counts_with_cache(g, target, path, args.graph.cache_dir));
  }

  TrainedModel model =
      train(g, args.graph.target_type, args.graph.metapaths, cfg, &counts);
  save_checkpoint(model, args.out);

  std::string log = "epoch\ttrain_loss\tval_micro_f1\n";
  for (const auto& e : model.log) {
    log += std::to_string(e.epoch);
    log += '\t';
    log += hahe::detail::format_real(e.train_loss);
    log += '\t';
    log += hahe::detail::format_real(e.val_micro_f1);
    log += '\n';
  }
  write_text_file(args.out + ".log.tsv", log);

  std::cout << "epochs: " << model.log.size() << '\n'
            << "best_epoch: " << model.best_epoch << '\n'
            << "best_val_micro_f1: "
            << hahe::detail::format_real(model.best_val_f1) << '\n';
}

inline const std::vector<std::size_t>& pick_split(const TrainedModel& model,
                                                  const std::string& name) {
  if (name == "train") return model.train_nodes;
  if (name == "val") return model.val_nodes;
  if (name == "test") return model.test_nodes;
  throw DataError("unknown split '" + name + "' (expected train, val, or test)");
}

inline void run_eval(const std::string& checkpoint, const std::string& split,
                     const std::string& out) {
  TrainedModel model = load_checkpoint(checkpoint);
  const auto& nodes = pick_split(model, split);
  if (nodes.empty()) throw DataError("split '" + split + "' is empty");
  MetricReport rep = evaluate_split(model, nodes);
  std::string text = format_metric_report(rep);
  std::cout << text;
  if (!out.empty()) write_text_file(out, text);
}

inline void run_embed(const std::string& checkpoint, const std::string& out) {
  export_embeddings(load_checkpoint(checkpoint), out);
}

inline void run_attention(const std::string& checkpoint,
                          const std::string& out) {
  AttentionReport rep = attention_report(load_checkpoint(checkpoint));
  std::cout << format_attention_report(rep);
  if (!out.empty()) write_text_file(out, attention_flat_tsv(rep));
}

inline void run_synth(const SynthConfig& cfg, const std::string& out_dir) {
  SynthResult res = generate_planted_hin(cfg);
  std::filesystem::create_directories(out_dir);
  save_graph(res.graph, out_dir + "/nodes.tsv", out_dir + "/edges.tsv",
             out_dir + "/labels.tsv");
  std::string specs;
  for (const auto& s : res.metapaths) specs += s + "\n";
  write_text_file(out_dir + "/metapaths.txt", specs);
  std::cout << "nodes: " << res.graph.node_count() << '\n'
            << "edges: " << res.graph.edge_count() << '\n';
}

inline void run_pathcount(const GraphArgs& args) {
  TypedGraph g = load_graph_args(args);
  TargetSet target = select_target(g, args.target_type);
  MetaPath path = parse_metapath(g, args.metapaths[0], args.target_type);
  PathCounts counts = counts_with_cache(g, target, path, args.cache_dir);

  std::cout << "#id";
  for (std::size_t j = 0; j < target.size(); ++j)
    std::cout << '\t' << g.node_ids[target.nodes[j]];
  std::cout << '\n';
  for (std::size_t i = 0; i < target.size(); ++i) {
    std::cout << g.node_ids[target.nodes[i]];
    for (std::size_t j = 0; j < target.size(); ++j)
      std::cout << '\t' << counts.at(i, j);
    std::cout << '\n';
  }
}

}  // namespace cli

inline int run_cli(int argc, char** argv) {
  CLI::App app{"hierarchical attentive network embeddings over meta paths"};
  app.require_subcommand(1);

  cli::TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "fit a model and save a checkpoint");
  cli::add_graph_options(train_cmd, train_args.graph, true);
  train_cmd->add_option("--config", train_args.config_file,
                        "key = value config file");
  train_cmd->add_option("--out", train_args.out, "checkpoint output path")
      ->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_args.seed,
                                         "overrides the config seed");
  auto* fusion_opt =
      train_cmd->add_option("--fusion", train_args.fusion,
                            "attention, avg, or max (overrides config)");
  auto* depth_opt = train_cmd->add_option(
      "--feature-depth", train_args.feature_depth,
      "layers in the per-path feature transform (default 1)");
  auto* threshold_opt = train_cmd->add_option(
      "--threshold", train_args.threshold,
      "multi-label decision threshold (default 0.5)");

  std::string eval_checkpoint, eval_split = "test", eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "score a stored model on a split");
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint path")
      ->required();
  eval_cmd->add_option("--split", eval_split, "train, val, or test (default test)");
  eval_cmd->add_option("--out", eval_out, "also write the report here");

  std::string embed_checkpoint, embed_out;
  auto* embed_cmd = app.add_subcommand("embed", "export embeddings as TSV");
  embed_cmd->add_option("--checkpoint", embed_checkpoint, "checkpoint path")
      ->required();
  embed_cmd->add_option("--out", embed_out, "embedding TSV output path")
      ->required();

  std::string att_checkpoint, att_out;
  auto* att_cmd = app.add_subcommand(
      "attention", "report per-path attention weights and single-path scores");
  att_cmd->add_option("--checkpoint", att_checkpoint, "checkpoint path")
      ->required();
  att_cmd->add_option("--out", att_out, "flat TSV output path");

  std::string synth_out;
  SynthConfig synth_cfg;
  std::vector<std::string> synth_paths;
  auto* synth_cmd =
      app.add_subcommand("synth", "generate a planted-structure dataset");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--n-target", synth_cfg.n_target,
                        "target node count (default 300)");
  synth_cmd->add_option("--classes", synth_cfg.n_classes,
                        "class count (default 2)");
  synth_cmd->add_option("--seed", synth_cfg.seed, "generator seed");
  synth_cmd->add_option(
      "--path", synth_paths,
      "content pool as COUNT,INTRA,INTER; repeatable "
      "(default: 100,0.8,0.05 and 100,0.3,0.3)");

  cli::GraphArgs pc_args;
  auto* pc_cmd = app.add_subcommand(
      "pathcount", "print the path-count matrix for one meta path");
  cli::add_graph_options(pc_cmd, pc_args, false);

  train_cmd->callback([&] {
    cli::run_train(train_args, seed_opt->count() > 0, fusion_opt->count() > 0,
                   depth_opt->count() > 0, threshold_opt->count() > 0);
  });
  eval_cmd->callback([&] { cli::run_eval(eval_checkpoint, eval_split, eval_out); });
  embed_cmd->callback([&] { cli::run_embed(embed_checkpoint, embed_out); });
  att_cmd->callback([&] { cli::run_attention(att_checkpoint, att_out); });
  synth_cmd->callback([&] {
    if (synth_paths.empty())
      synth_cfg.paths = {{100, 0.8, 0.05}, {100, 0.3, 0.3}};
    else
      for (const auto& spec : synth_paths)
        synth_cfg.paths.push_back(cli::parse_path_triple(spec));
    cli::run_synth(synth_cfg, synth_out);
  });
  pc_cmd->callback([&] { cli::run_pathcount(pc_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success))
      return app.exit(e);
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace hahe
