#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "hahe/errors.hpp"
#include "hahe/graph.hpp"
#include "hahe/metapath.hpp"
#include "hahe/metrics.hpp"
#include "hahe/model.hpp"
#include "hahe/rng.hpp"

namespace hahe {

inline Fusion parse_fusion(const std::string& s) {
  if (s == "attention") return Fusion::kAttention;
  if (s == "avg") return Fusion::kAvg;
  if (s == "max") return Fusion::kMax;
  throw DataError("unknown fusion mode '" + s +
                  "' (expected attention, avg, or max)");
}

inline const char* fusion_name(Fusion f) {
  switch (f) {
    case Fusion::kAttention: return "attention";
    case Fusion::kAvg: return "avg";
    default: return "max";
  }
}

inline TaskMode parse_task_mode(const std::string& s) {
  if (s == "single") return TaskMode::kSingleLabel;
  if (s == "multi") return TaskMode::kMultiLabel;
  throw DataError("unknown task mode '" + s + "' (expected single or multi)");
}

inline const char* task_mode_name(TaskMode m) {
  return m == TaskMode::kSingleLabel ? "single" : "multi";
}

struct TrainConfig {
  double learning_rate = 0.0005;
  std::size_t batch_size = 512;
  std::size_t d = 128;
  std::size_t k = 64;
  std::size_t sample_size = 20;
  std::size_t max_epochs = 300;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
  Fusion fusion = Fusion::kAttention;
  TaskMode task_mode = TaskMode::kSingleLabel;
  double train_frac = 0.1;
  double val_frac = 0.1;
  // Not config-file keys: flag-level knobs.
  std::size_t feature_depth = 1;
  bool clip_gradients = true;
  double clip_norm = 5.0;
  double threshold = 0.5;  // multi-label decision cut

  void validate() const {
    if (!(learning_rate > 0.0)) throw DataError("config: learning_rate must be positive");
    if (batch_size == 0) throw DataError("config: batch_size must be positive");
    if (d == 0) throw DataError("config: dim must be positive");
    if (k == 0) throw DataError("config: pref_dim must be positive");
    if (sample_size == 0) throw DataError("config: sample_size must be positive");
    if (max_epochs == 0) throw DataError("config: max_epochs must be positive");
    if (patience == 0) throw DataError("config: patience must be positive");
    if (feature_depth == 0) throw DataError("config: feature depth must be positive");
    if (!(train_frac > 0.0 && train_frac < 1.0))
      throw DataError("config: train_frac must lie in (0, 1)");
    if (!(val_frac > 0.0 && val_frac < 1.0))
      throw DataError("config: val_frac must lie in (0, 1)");
    if (train_frac + val_frac > 1.0)
      throw DataError("config: train_frac + val_frac must not exceed 1");
    if (!(clip_norm > 0.0)) throw DataError("config: clip norm must be positive");
  }

  HyperParams hyper() const {
    HyperParams hp;
    hp.d = d;
    hp.k = k;
    hp.sample_size = sample_size;
    hp.feature_depth = feature_depth;
    hp.task_mode = task_mode;
    hp.fusion = fusion;
    return hp;
  }
};

namespace detail {

inline double parse_real(const std::string& value, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": expected a number, got '" + value + "'");
  }
}

inline std::uint64_t parse_count(const std::string& value,
                                 const std::string& where) {
  try {
    if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
    std::size_t used = 0;
    std::uint64_t v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw DataError(where + ": expected a non-negative integer, got '" + value +
                    "'");
  }
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// The documented config keys; anything else is an error so typos cannot
// silently fall back to defaults.
inline void set_config_key(TrainConfig& cfg, const std::string& key,
                           const std::string& value, const std::string& where) {
  if (key == "learning_rate") cfg.learning_rate = detail::parse_real(value, where);
  else if (key == "batch_size") cfg.batch_size = detail::parse_count(value, where);
  else if (key == "dim") cfg.d = detail::parse_count(value, where);
  else if (key == "pref_dim") cfg.k = detail::parse_count(value, where);
  else if (key == "sample_size") cfg.sample_size = detail::parse_count(value, where);
  else if (key == "max_epochs") cfg.max_epochs = detail::parse_count(value, where);
  else if (key == "patience") cfg.patience = detail::parse_count(value, where);
  else if (key == "seed") cfg.seed = detail::parse_count(value, where);
  else if (key == "fusion") cfg.fusion = parse_fusion(value);
  else if (key == "task_mode") cfg.task_mode = parse_task_mode(value);
  else if (key == "train_frac") cfg.train_frac = detail::parse_real(value, where);
  else if (key == "val_frac") cfg.val_frac = detail::parse_real(value, where);
  else throw DataError(where + ": unknown config key '" + key + "'");
}

// Flat "key = value" lines; blank lines and '#' comments are skipped.
inline TrainConfig load_train_config(const std::string& path,
                                     TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string where = path + " line " + std::to_string(line_no);
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw DataError(where + ": expected 'key = value'");
    std::string key = detail::trim(t.substr(0, eq));
    std::string value = detail::trim(t.substr(eq + 1));
    if (key.empty() || value.empty())
      throw DataError(where + ": expected 'key = value'");
    set_config_key(base, key, value, where);
  }
  return base;
}

// Xavier-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases,
// preference rows with fan (1, k). Fill order follows the registry, so a
// fixed seed reproduces parameters bitwise.
inline ModelParams init_params(std::size_t n_targets, std::size_t n_paths,
                               const HyperParams& hp, std::size_t n_classes,
                               std::uint64_t seed) {
  ModelParams p;
  p.w_f.resize(n_paths);
  for (std::size_t pi = 0; pi < n_paths; ++pi) {
    p.w_f[pi].emplace_back(Tensor({n_targets, hp.d}));
    for (std::size_t l = 1; l < hp.feature_depth; ++l)
      p.w_f[pi].emplace_back(Tensor({hp.d, hp.d}));
    p.w_c.emplace_back(Tensor({2 * hp.d, hp.d}));
  }
  p.w_p = Tensor({hp.d, hp.k});
  p.b_p = Tensor({hp.k});
  p.pref = Tensor({n_targets, hp.k});
  p.w_cls = Tensor({hp.d, n_classes});
  p.b_cls = Tensor({n_classes});

  Rng rng(seed, "init");
  for (auto& [name, t] : p.registry()) {
    if (name == "b_p" || name == "b_cls") continue;  // stay zero
    double bound;
    if (name == "pref") bound = std::sqrt(6.0 / (1.0 + static_cast<double>(hp.k)));
    else bound = std::sqrt(6.0 / static_cast<double>(t->rows() + t->cols()));
    for (std::size_t i = 0; i < t->numel(); ++i)
      (*t)[i] = rng.uniform(-bound, bound);
  }
  return p;
}

// Uniform sample without replacement, ascending; small sets pass through
// whole. Draw count depends only on set size and sample_size, keeping the
// rng stream aligned across runs.
inline std::vector<std::size_t> sample_neighbors(
    const std::vector<std::size_t>& neighbors, std::size_t sample_size,
    Rng& rng) {
  if (sample_size == 0) throw std::invalid_argument("sample_size must be positive");
  if (neighbors.size() <= sample_size) return neighbors;
  std::vector<std::size_t> pool = neighbors;
  for (std::size_t i = 0; i < sample_size; ++i) {
    std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(sample_size);
  std::sort(pool.begin(), pool.end());
  return pool;
}

struct SplitResult {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

// Stratifies labeled positions by class (multi-label: by lowest label),
// shuffles within each class, and slices off rounded train/val fractions.
// Every class lands at least one node in train. Unlabeled positions are
// left out entirely.
inline SplitResult stratified_split(const std::vector<std::vector<int>>& labels,
                                    std::size_t n_classes, double train_frac,
                                    double val_frac, Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!labels[i].empty()) by_class[labels[i][0]].push_back(i);

  SplitResult out;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    rng.shuffle(members);
    const std::size_t n = members.size();
    std::size_t n_train = static_cast<std::size_t>(
        std::llround(train_frac * static_cast<double>(n)));
    n_train = std::min(std::max<std::size_t>(n_train, 1), n);
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(val_frac * static_cast<double>(n)));
    n_val = std::min(n_val, n - n_train);
    for (std::size_t i = 0; i < n; ++i) {
      if (i < n_train) out.train.push_back(members[i]);
      else if (i < n_train + n_val) out.val.push_back(members[i]);
      else out.test.push_back(members[i]);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// Standard Adam with bias-corrected moments. Moment buffers are created on
// the first call; later calls enforce matching shapes.
inline void adam_step(const std::vector<Tensor*>& params,
                      const std::vector<Tensor>& grads, AdamState& st,
                      double lr) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  if (st.m.empty()) {
    for (Tensor* p : params) {
      st.m.push_back(Tensor::zeros_like(*p));
      st.v.push_back(Tensor::zeros_like(*p));
    }
  }
  if (st.m.size() != params.size())
    throw std::invalid_argument("adam_step: state size mismatch");
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!p.same_shape(g) || !p.same_shape(st.m[i]))
      throw std::invalid_argument("adam_step: shape mismatch at parameter " +
                                  std::to_string(i));
    for (std::size_t n = 0; n < p.numel(); ++n) {
      st.m[i][n] = st.beta1 * st.m[i][n] + (1.0 - st.beta1) * g[n];
      st.v[i][n] = st.beta2 * st.v[i][n] + (1.0 - st.beta2) * g[n] * g[n];
      const double m_hat = st.m[i][n] / c1;
      const double v_hat = st.v[i][n] / c2;
      p[n] -= lr * m_hat / (std::sqrt(v_hat) + st.eps);
    }
  }
}

// Tape handles over frozen parameters: same wiring as make_leaves but
// nothing tracks gradients, for inference passes.
inline TapeParams make_constants(ad::Tape& tape, const ModelParams& params) {
  TapeParams tp;
  tp.w_f.resize(params.w_f.size());
  for (std::size_t p = 0; p < params.w_f.size(); ++p) {
    for (const Tensor& layer : params.w_f[p])
      tp.w_f[p].push_back(tape.constant(layer));
    tp.w_c.push_back(tape.constant(params.w_c[p]));
  }
  tp.w_p = tape.constant(params.w_p);
  tp.b_p = tape.constant(params.b_p);
  tp.pref = tape.constant(params.pref);
  tp.w_cls = tape.constant(params.w_cls);
  tp.b_cls = tape.constant(params.b_cls);
  return tp;
}

// Leaf handles in registry order, for gradient collection.
inline std::vector<ad::Value> leaf_list(const TapeParams& tp) {
  std::vector<ad::Value> out;
  for (std::size_t p = 0; p < tp.w_f.size(); ++p) {
    for (ad::Value v : tp.w_f[p]) out.push_back(v);
    out.push_back(tp.w_c[p]);
  }
  out.push_back(tp.w_p);
  out.push_back(tp.b_p);
  out.push_back(tp.pref);
  out.push_back(tp.w_cls);
  out.push_back(tp.b_cls);
  return out;
}

struct FullForward {
  Tensor h;                         // len(nodes) x d
  Tensor gamma;                     // len(nodes) x M, rows sum to 1
  std::vector<Tensor> h_per_path;   // M tensors, len(nodes) x d
  Tensor scores;                    // len(nodes) x L
};

// Inference over the given target positions with full neighborhoods,
// processed in chunks. Fusion modes without attention weights report
// uniform gamma rows.
inline FullForward forward_full(
    const ModelParams& params, const HyperParams& hp,
    const std::vector<NormalizedAdjacency>& adjacencies,
    const std::vector<std::vector<std::vector<std::size_t>>>& neighbors,
    const std::vector<std::size_t>& nodes, std::size_t chunk_size) {
  const std::size_t m = adjacencies.size();
  const std::size_t n = nodes.size();
  const std::size_t n_classes = params.b_cls.numel();
  FullForward out;
  out.h = Tensor({n, hp.d});
  out.gamma = Tensor({n, m});
  out.h_per_path.assign(m, Tensor({n, hp.d}));
  out.scores = Tensor({n, n_classes});

  for (std::size_t start = 0; start < n; start += chunk_size) {
    const std::size_t stop = std::min(n, start + chunk_size);
    std::vector<std::size_t> batch(nodes.begin() + start, nodes.begin() + stop);
    ad::Tape t;
    TapeParams tp = make_constants(t, params);
    auto fwd = forward_batch(t, tp, hp, adjacencies, neighbors, batch);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t r = start + b;
      const Tensor& h = t.value(fwd.h[b]);
      for (std::size_t c = 0; c < hp.d; ++c) out.h.at(r, c) = h[c];
      const Tensor& s = t.value(fwd.scores[b]);
      for (std::size_t l = 0; l < n_classes; ++l) out.scores.at(r, l) = s[l];
      for (std::size_t pi = 0; pi < m; ++pi) {
        const Tensor& hp_path = t.value(fwd.h_per_path[b][pi]);
        for (std::size_t c = 0; c < hp.d; ++c)
          out.h_per_path[pi].at(r, c) = hp_path[c];
      }
      if (hp.fusion == Fusion::kAttention) {
        const Tensor& g = t.value(fwd.gamma[b]);
        for (std::size_t pi = 0; pi < m; ++pi) out.gamma.at(r, pi) = g[pi];
      } else {
        for (std::size_t pi = 0; pi < m; ++pi)
          out.gamma.at(r, pi) = 1.0 / static_cast<double>(m);
      }
    }
  }
  return out;
}

// Micro-F1 of the frozen model on the given positions.
inline double micro_f1_on(
    const ModelParams& params, const HyperParams& hp,
    const std::vector<NormalizedAdjacency>& adjacencies,
    const std::vector<std::vector<std::vector<std::size_t>>>& neighbors,
    const std::vector<std::size_t>& nodes,
    const std::vector<std::vector<int>>& labels, std::size_t n_classes,
    std::size_t chunk_size, double threshold) {
  auto fwd = forward_full(params, hp, adjacencies, neighbors, nodes, chunk_size);
  std::vector<std::vector<int>> preds, truths;
  for (std::size_t b = 0; b < nodes.size(); ++b) {
    Tensor s({n_classes});
    for (std::size_t l = 0; l < n_classes; ++l) s[l] = fwd.scores.at(b, l);
    preds.push_back(predict_labels(s, hp.task_mode, threshold));
    truths.push_back(labels[nodes[b]]);
  }
  return micro_macro_f1(preds, truths, n_classes).micro_f1;
}

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_micro_f1 = -1.0;  // -1 when there is no validation split
};

struct TrainedModel {
  HyperParams hp;
  TrainConfig config;
  ModelParams params;
  std::vector<std::string> metapath_names;
  std::vector<std::string> target_ids;
  std::vector<std::vector<int>> labels;  // per target position
  std::vector<std::string> label_names;
  std::vector<std::size_t> train_nodes, val_nodes, test_nodes;
  Tensor h;                        // N_T x d
  Tensor gamma;                    // N_T x M
  std::vector<Tensor> h_per_path;  // M tensors, N_T x d
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_f1 = -1.0;
};

// Minibatch semi-supervised training: shuffled batches over labeled train
// nodes, neighbor sets redrawn per batch, Adam with optional global-norm
// clipping, validation micro-F1 early stopping with best-snapshot restore.
// All randomness derives from config.seed via named streams.
inline TrainedModel train(const TypedGraph& g, const std::string& target_type,
                          const std::vector<std::string>& metapath_specs,
                          const TrainConfig& cfg,
                          const std::vector<PathCounts>* precomputed = nullptr) {
  cfg.validate();
  if (metapath_specs.empty()) throw DataError("at least one meta path is required");

  TargetSet target = select_target(g, target_type);
  validate_labels_on(g, target);
  const std::size_t n_t = target.size();
  const std::size_t m = metapath_specs.size();

  std::vector<MetaPath> paths;
  for (const auto& spec : metapath_specs)
    paths.push_back(parse_metapath(g, spec, target_type));

  std::vector<NormalizedAdjacency> adj;
  std::vector<std::vector<std::vector<std::size_t>>> nbrs;
  for (std::size_t pi = 0; pi < m; ++pi) {
    PathCounts counts = precomputed ? (*precomputed)[pi]
                                    : commuting_matrix(g, target, paths[pi]);
    if (counts.n != n_t)
      throw DataError("precomputed counts for meta path '" + paths[pi].name +
                      "' do not match the target set");
    nbrs.push_back(neighbor_sets(counts));
    adj.push_back(normalize_rows(std::move(counts)));
  }

  const std::size_t n_classes = g.label_class_count();
  std::vector<std::vector<int>> labels(n_t);
  bool any_labeled = false;
  for (std::size_t i = 0; i < n_t; ++i) {
    labels[i] = g.labels_of[target.nodes[i]];
    any_labeled |= !labels[i].empty();
  }
  if (!any_labeled || n_classes == 0)
    throw DataError("no labeled nodes of type '" + target_type + "'");

  Rng split_rng(cfg.seed, "split");
  SplitResult split = stratified_split(labels, n_classes, cfg.train_frac,
                                       cfg.val_frac, split_rng);
  if (split.train.empty()) throw DataError("empty training split");
  const bool has_val = !split.val.empty();

  HyperParams hp = cfg.hyper();
  ModelParams params = init_params(n_t, m, hp, n_classes, cfg.seed);
  std::vector<Tensor*> param_ptrs;
  for (auto& [name, t] : params.registry()) param_ptrs.push_back(t);
  AdamState adam;

  Rng shuffle_rng(cfg.seed, "shuffle");
  Rng sample_rng(cfg.seed, "sample");

  TrainedModel out;
  ModelParams best_params = params;
  double best_f1 = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t stale = 0;

  std::vector<std::vector<int>> batch_labels;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> batch(order.begin() + start,
                                     order.begin() + stop);

      std::vector<std::vector<std::vector<std::size_t>>> sampled(
          m, std::vector<std::vector<std::size_t>>(n_t));
      for (std::size_t node : batch)
        for (std::size_t pi = 0; pi < m; ++pi)
          sampled[pi][node] =
              sample_neighbors(nbrs[pi][node], cfg.sample_size, sample_rng);

      batch_labels.clear();
      for (std::size_t node : batch) batch_labels.push_back(labels[node]);

      ad::Tape t;
      TapeParams tp = make_leaves(t, params);
      auto fwd = forward_batch(t, tp, hp, adj, sampled, batch);
      ad::Value loss = cross_entropy_loss(t, fwd.scores, batch_labels,
                                          hp.task_mode, n_classes);
      const double loss_value = t.value(loss).scalar_value();
      if (!std::isfinite(loss_value))
        throw NumericError("loss is not finite at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      epoch_loss += loss_value;

      t.backward(loss);
      std::vector<Tensor> grads;
      for (ad::Value leaf : leaf_list(tp)) grads.push_back(t.grad(leaf));

      if (cfg.clip_gradients) {
        double sq = 0.0;
        for (const Tensor& gr : grads)
          for (std::size_t i = 0; i < gr.numel(); ++i) sq += gr[i] * gr[i];
        const double norm = std::sqrt(sq);
        if (norm > cfg.clip_norm) {
          const double scale = cfg.clip_norm / norm;
          for (Tensor& gr : grads)
            for (std::size_t i = 0; i < gr.numel(); ++i) gr[i] *= scale;
        }
      }
      adam_step(param_ptrs, grads, adam, cfg.learning_rate);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss;
    if (has_val)
      entry.val_micro_f1 =
          micro_f1_on(params, hp, adj, nbrs, split.val, labels, n_classes,
                      cfg.batch_size, cfg.threshold);
    out.log.push_back(entry);

    if (has_val) {
      // Ties refresh the snapshot (equal validation, more training) but do
      // not reset the stopping counter; only strict gains do.
      if (entry.val_micro_f1 > best_f1) {
        best_f1 = entry.val_micro_f1;
        best_params = params;
        best_epoch = epoch;
        stale = 0;
      } else {
        if (entry.val_micro_f1 == best_f1) {
          best_params = params;
          best_epoch = epoch;
        }
        if (++stale >= cfg.patience) break;
      }
    }
  }
  if (!has_val) {
    best_params = params;
    best_epoch = out.log.empty() ? 0 : out.log.back().epoch;
    best_f1 = -1.0;
  }

  out.hp = hp;
  out.config = cfg;
  out.params = std::move(best_params);
  for (const auto& p : paths) out.metapath_names.push_back(p.name);
  for (std::size_t i = 0; i < n_t; ++i)
    out.target_ids.push_back(g.node_ids[target.nodes[i]]);
  out.labels = std::move(labels);
  out.label_names = g.label_names;
  out.train_nodes = std::move(split.train);
  out.val_nodes = std::move(split.val);
  out.test_nodes = std::move(split.test);
  out.best_epoch = best_epoch;
  out.best_val_f1 = best_f1;

  std::vector<std::size_t> all(n_t);
  for (std::size_t i = 0; i < n_t; ++i) all[i] = i;
  FullForward full =
      forward_full(out.params, hp, adj, nbrs, all, cfg.batch_size);
  if (!full.h.all_finite())
    throw NumericError("final embeddings are not finite");
  out.h = std::move(full.h);
  out.gamma = std::move(full.gamma);
  out.h_per_path = std::move(full.h_per_path);
  return out;
}

}  // namespace hahe
