#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hahe/autodiff.hpp"
#include "hahe/errors.hpp"
#include "hahe/metapath.hpp"
#include "hahe/tensor.hpp"

namespace hahe {

enum class TaskMode { kSingleLabel, kMultiLabel };
enum class Fusion { kAttention, kAvg, kMax };

struct HyperParams {
  std::size_t d = 128;        // embedding dimension
  std::size_t k = 64;         // preference vector dimension
  std::size_t sample_size = 20;
  std::size_t feature_depth = 1;  // layers in the feature transform
  TaskMode task_mode = TaskMode::kSingleLabel;
  Fusion fusion = Fusion::kAttention;
};

// All trainable state. Per meta path: the feature transform chain w_f
// (first layer N_T x d, further layers d x d) and the concat projection w_c
// (2d x d). Shared: w_p (d x k), b_p (k), per-node preference rows
// pref (N_T x k), affine classifier w_cls (d x L), b_cls (L).
struct ModelParams {
  std::vector<std::vector<Tensor>> w_f;
  std::vector<Tensor> w_c;
  Tensor w_p;
  Tensor b_p;
  Tensor pref;
  Tensor w_cls;
  Tensor b_cls;

  // Stable iteration order for the optimizer and checkpoints.
  std::vector<std::pair<std::string, const Tensor*>> registry() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->registry())
      out.emplace_back(name, t);
    return out;
  }

  std::vector<std::pair<std::string, Tensor*>> registry() {
    std::vector<std::pair<std::string, Tensor*>> out;
    for (std::size_t p = 0; p < w_f.size(); ++p) {
      for (std::size_t l = 0; l < w_f[p].size(); ++l) {
        out.emplace_back("w_f." + std::to_string(p) + "." + std::to_string(l),
                         &w_f[p][l]);
      }
      out.emplace_back("w_c." + std::to_string(p), &w_c[p]);
    }
    out.emplace_back("w_p", &w_p);
    out.emplace_back("b_p", &b_p);
    out.emplace_back("pref", &pref);
    out.emplace_back("w_cls", &w_cls);
    out.emplace_back("b_cls", &b_cls);
    return out;
  }
};

// Tape handles mirroring ModelParams, in registry order.
struct TapeParams {
  std::vector<std::vector<ad::Value>> w_f;
  std::vector<ad::Value> w_c;
  ad::Value w_p, b_p, pref, w_cls, b_cls;
};

inline TapeParams make_leaves(ad::Tape& tape, const ModelParams& params) {
  TapeParams tp;
  tp.w_f.resize(params.w_f.size());
  for (std::size_t p = 0; p < params.w_f.size(); ++p) {
    for (const Tensor& layer : params.w_f[p])
      tp.w_f[p].push_back(tape.leaf(layer));
    tp.w_c.push_back(tape.leaf(params.w_c[p]));
  }
  tp.w_p = tape.leaf(params.w_p);
  tp.b_p = tape.leaf(params.b_p);
  tp.pref = tape.leaf(params.pref);
  tp.w_cls = tape.leaf(params.w_cls);
  tp.b_cls = tape.leaf(params.b_cls);
  return tp;
}

// A_i (1 x N_T) through the feature transform chain: linear for depth 1,
// tanh between layers otherwise.
inline ad::Value transform_feature(ad::Tape& t, ad::Value a_row,
                                   const std::vector<ad::Value>& w_f_chain) {
  ad::Value x = t.vecmat(a_row, w_f_chain[0]);
  for (std::size_t j = 1; j < w_f_chain.size(); ++j)
    x = t.vecmat(t.tanh(x), w_f_chain[j]);
  return x;
}

// Attention over transformed neighbor features. alpha is only meaningful
// when has_neighbors; without neighbors the aggregate is a zero vector.
struct InstanceAttentionOut {
  bool has_neighbors = false;
  ad::Value alpha;
  ad::Value h_agg;
};

// f_self and f_nbrs are already transformed (d-vectors). Scores are cosine
// similarities, weights their softmax, the aggregate tanh of the weighted
// neighbor sum.
inline InstanceAttentionOut attention_core(ad::Tape& t, ad::Value f_self,
                                           const std::vector<ad::Value>& f_nbrs,
                                           std::size_t d) {
  InstanceAttentionOut out;
  if (f_nbrs.empty()) {
    out.h_agg = t.constant(Tensor({d}));
    return out;
  }
  out.has_neighbors = true;
  ad::Value self_hat = t.l2_normalize(f_self);
  std::vector<ad::Value> scores;
  scores.reserve(f_nbrs.size());
  for (ad::Value f : f_nbrs)
    scores.push_back(t.dot(self_hat, t.l2_normalize(f)));
  out.alpha = t.softmax(t.stack(scores));
  out.h_agg = t.tanh(t.vecmat(out.alpha, t.stack(f_nbrs)));
  return out;
}

// Raw-feature entry point: transforms A_i and each neighbor row first.
inline InstanceAttentionOut instance_attention(
    ad::Tape& t, ad::Value a_self, const std::vector<ad::Value>& neighbor_rows,
    const std::vector<ad::Value>& w_f_chain) {
  ad::Value f_self = transform_feature(t, a_self, w_f_chain);
  std::vector<ad::Value> f_nbrs;
  f_nbrs.reserve(neighbor_rows.size());
  for (ad::Value a : neighbor_rows)
    f_nbrs.push_back(transform_feature(t, a, w_f_chain));
  return attention_core(t, f_self, f_nbrs,
                        t.value(f_self).numel());
}

// One meta path's node embedding: the concat projection of the aggregated
// neighborhood embedding and the node's own transformed feature. Linear on
// purpose; no activation follows the projection.
inline ad::Value metapath_embedding(ad::Tape& t, ad::Value a_self,
                                    const std::vector<ad::Value>& neighbor_rows,
                                    const std::vector<ad::Value>& w_f_chain,
                                    ad::Value w_c) {
  ad::Value f_self = transform_feature(t, a_self, w_f_chain);
  std::vector<ad::Value> f_nbrs;
  f_nbrs.reserve(neighbor_rows.size());
  for (ad::Value a : neighbor_rows)
    f_nbrs.push_back(transform_feature(t, a, w_f_chain));
  auto att = attention_core(t, f_self, f_nbrs, t.value(f_self).numel());
  return t.vecmat(t.concat(att.h_agg, f_self), w_c);
}

struct MetapathAttentionOut {
  ad::Value gamma;  // M weights
  ad::Value h;      // fused d-vector
};

// Per-path embeddings are re-projected into preference space with a tanh
// layer; the node's preference vector scores each path by cosine, softmax
// yields the weights, and the fused embedding is their weighted sum.
inline MetapathAttentionOut metapath_attention(
    ad::Tape& t, const std::vector<ad::Value>& h_list, ad::Value p_i,
    ad::Value w_p, ad::Value b_p) {
  if (h_list.empty()) throw std::invalid_argument("metapath_attention: M = 0");
  std::vector<ad::Value> scores;
  scores.reserve(h_list.size());
  for (ad::Value h : h_list) {
    ad::Value projected = t.tanh(t.add(t.vecmat(h, w_p), b_p));
    scores.push_back(t.cosine(p_i, projected));
  }
  MetapathAttentionOut out;
  out.gamma = t.softmax(t.stack(scores));
  out.h = t.vecmat(out.gamma, t.stack(h_list));
  return out;
}

// Ablation fusions: elementwise mean or maximum over the per-path
// embeddings.
inline ad::Value fuse_variants(ad::Tape& t,
                               const std::vector<ad::Value>& h_list,
                               Fusion mode) {
  if (h_list.empty()) throw std::invalid_argument("fuse_variants: empty list");
  switch (mode) {
    case Fusion::kAvg: {
      ad::Value acc = h_list[0];
      for (std::size_t i = 1; i < h_list.size(); ++i)
        acc = t.add(acc, h_list[i]);
      return t.scale(acc, 1.0 / static_cast<double>(h_list.size()));
    }
    case Fusion::kMax:
      return t.colwise_max(t.stack(h_list));
    case Fusion::kAttention:
      throw std::invalid_argument(
          "fuse_variants: attention fusion goes through metapath_attention");
  }
  throw std::invalid_argument("fuse_variants: unknown mode");
}

// Affine classifier head: softmax scores for single-label tasks, per-label
// sigmoids for multi-label tasks.
inline ad::Value classify(ad::Tape& t, ad::Value h, ad::Value w_cls,
                          ad::Value b_cls, TaskMode mode) {
  ad::Value logits = t.add(t.vecmat(h, w_cls), b_cls);
  return mode == TaskMode::kSingleLabel ? t.softmax(logits)
                                        : t.sigmoid(logits);
}

// Batch loss is the SUM of per-node losses. Single-label: negative log of
// the true class's score. Multi-label: binary cross-entropy summed over
// labels. ln arguments are floored at 1e-12.
inline ad::Value cross_entropy_loss(
    ad::Tape& t, const std::vector<ad::Value>& scores,
    const std::vector<std::vector<int>>& labels, TaskMode mode,
    std::size_t num_classes) {
  if (scores.empty()) {
    throw std::invalid_argument("cross_entropy_loss: empty batch");
  }
  if (scores.size() != labels.size()) {
    throw std::invalid_argument("cross_entropy_loss: batch size mismatch");
  }
  std::vector<ad::Value> per_node;
  per_node.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i].empty()) {
      throw DataError("cross_entropy_loss: node " + std::to_string(i) +
                      " in batch has no label");
    }
    if (mode == TaskMode::kSingleLabel) {
      if (labels[i].size() != 1) {
        throw DataError("cross_entropy_loss: node " + std::to_string(i) +
                        " has " + std::to_string(labels[i].size()) +
                        " labels in single-label mode");
      }
      Tensor onehot({num_classes});
      onehot[static_cast<std::size_t>(labels[i][0])] = 1.0;
      per_node.push_back(t.scale(
          t.dot(t.constant(onehot),
                t.log(t.clamp_min(scores[i], ad::kLogFloor))),
          -1.0));
    } else {
      Tensor multihot({num_classes});
      Tensor complement({num_classes});
      complement.fill(1.0);
      for (int l : labels[i]) {
        multihot[static_cast<std::size_t>(l)] = 1.0;
        complement[static_cast<std::size_t>(l)] = 0.0;
      }
      ad::Value s = scores[i];
      ad::Value one_minus_s = t.add_const(t.scale(s, -1.0), 1.0);
      ad::Value pos = t.dot(t.constant(multihot),
                            t.log(t.clamp_min(s, ad::kLogFloor)));
      ad::Value neg = t.dot(t.constant(complement),
                            t.log(t.clamp_min(one_minus_s, ad::kLogFloor)));
      per_node.push_back(t.scale(t.add(pos, neg), -1.0));
    }
  }
  return t.sum(t.stack(per_node));
}

struct ForwardOptions {
  // Replaces the learned meta-path weights with constants 1/M; used to
  // check the avg-fusion identity.
  bool force_uniform_gamma = false;
};

// One batch's forward pass results; handles index into the shared tape.
struct BatchForward {
  std::vector<ad::Value> h;       // fused embedding per batch node
  std::vector<ad::Value> scores;  // classifier output per batch node
  // gamma per node (attention fusion only; invalid handles otherwise)
  std::vector<ad::Value> gamma;
  std::vector<std::vector<ad::Value>> h_per_path;  // [node][path]
  // alpha handles per [node][path]; invalid when that node has no sampled
  // neighbors under that path
  std::vector<std::vector<ad::Value>> alpha;
};

// Batched forward pass. For each meta path, the union of needed adjacency
// rows is gathered into one dense block and pushed through the feature
// transform as a single matrix product; per-node work then operates on rows
// of the transformed block. Keeps cost proportional to batch size and
// sampled neighborhood size rather than N_T^2.
inline BatchForward forward_batch(
    ad::Tape& t, const TapeParams& tp, const HyperParams& hp,
    const std::vector<NormalizedAdjacency>& adjacencies,
    const std::vector<std::vector<std::vector<std::size_t>>>& neighbors,
    const std::vector<std::size_t>& batch, const ForwardOptions& opt = {}) {
  const std::size_t m = adjacencies.size();
  if (m == 0) throw std::invalid_argument("forward_batch: no meta paths");
  if (neighbors.size() != m || tp.w_f.size() != m) {
    throw std::invalid_argument("forward_batch: per-path input count mismatch");
  }
  const std::size_t n_t = adjacencies[0].n;

  BatchForward out;
  out.h_per_path.resize(batch.size());
  out.alpha.resize(batch.size());

  // h_lists[b][pi] built path-by-path, then fused per node.
  std::vector<std::vector<ad::Value>> h_lists(batch.size());

  for (std::size_t pi = 0; pi < m; ++pi) {
    const auto& adj = adjacencies[pi];
    const auto& nbr = neighbors[pi];

    // Union of rows this batch touches under the path, sorted for
    // determinism; local[r] = position of target row r in the dense block.
    std::vector<std::size_t> rows;
    for (std::size_t node : batch) {
      rows.push_back(node);
      rows.insert(rows.end(), nbr[node].begin(), nbr[node].end());
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    std::vector<std::size_t> local(n_t, 0);
    for (std::size_t r = 0; r < rows.size(); ++r) local[rows[r]] = r;

    Tensor a_sub({rows.size(), n_t});
    for (std::size_t r = 0; r < rows.size(); ++r)
      adj.fill_dense_row(rows[r], &a_sub.data()[r * n_t]);

    ad::Value x = t.matmul(t.constant(std::move(a_sub)), tp.w_f[pi][0]);
    for (std::size_t l = 1; l < tp.w_f[pi].size(); ++l)
      x = t.matmul(t.tanh(x), tp.w_f[pi][l]);

    // Row extraction and normalization cached per local row: neighbors
    // shared between batch nodes reuse one tape node.
    std::vector<ad::Value> row_of(rows.size()), hat_of(rows.size());
    std::vector<char> row_set(rows.size(), 0), hat_set(rows.size(), 0);
    auto get_row = [&](std::size_t r) {
      if (!row_set[r]) {
        row_of[r] = t.row(x, r);
        row_set[r] = 1;
      }
      return row_of[r];
    };
    auto get_hat = [&](std::size_t r) {
      if (!hat_set[r]) {
        hat_of[r] = t.l2_normalize(get_row(r));
        hat_set[r] = 1;
      }
      return hat_of[r];
    };

    for (std::size_t b = 0; b < batch.size(); ++b) {
      const std::size_t node = batch[b];
      const std::size_t self = local[node];
      ad::Value f_self = get_row(self);

      InstanceAttentionOut att;
      if (nbr[node].empty()) {
        att.h_agg = t.constant(Tensor({hp.d}));
      } else {
        att.has_neighbors = true;
        std::vector<ad::Value> scores, f_nbrs;
        scores.reserve(nbr[node].size());
        f_nbrs.reserve(nbr[node].size());
        for (std::size_t j : nbr[node]) {
          scores.push_back(t.dot(get_hat(self), get_hat(local[j])));
          f_nbrs.push_back(get_row(local[j]));
        }
        att.alpha = t.softmax(t.stack(scores));
        att.h_agg = t.tanh(t.vecmat(att.alpha, t.stack(f_nbrs)));
      }
      out.alpha[b].push_back(att.has_neighbors ? att.alpha : ad::Value());
      h_lists[b].push_back(
          t.vecmat(t.concat(att.h_agg, f_self), tp.w_c[pi]));
    }
  }

  for (std::size_t b = 0; b < batch.size(); ++b) {
    out.h_per_path[b] = h_lists[b];
    ad::Value fused;
    if (hp.fusion == Fusion::kAttention) {
      if (opt.force_uniform_gamma) {
        Tensor uniform({m});
        uniform.fill(1.0 / static_cast<double>(m));
        ad::Value gamma = t.constant(uniform);
        fused = t.vecmat(gamma, t.stack(h_lists[b]));
        out.gamma.push_back(gamma);
      } else {
        auto mp = metapath_attention(t, h_lists[b], t.row(tp.pref, batch[b]),
                                     tp.w_p, tp.b_p);
        fused = mp.h;
        out.gamma.push_back(mp.gamma);
      }
    } else {
      fused = fuse_variants(t, h_lists[b], hp.fusion);
      out.gamma.push_back(ad::Value());
    }
    out.h.push_back(fused);
    out.scores.push_back(
        classify(t, fused, tp.w_cls, tp.b_cls, hp.task_mode));
  }
  return out;
}

}  // namespace hahe
