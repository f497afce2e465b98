#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hahe/errors.hpp"
#include "hahe/metrics.hpp"
#include "hahe/train.hpp"

namespace hahe {

namespace detail {

inline void require_trained(const TrainedModel& model) {
  if (model.h.numel() == 0 || model.target_ids.empty())
    throw DataError("model is not trained");
}

// %.17g keeps doubles exact across a text round trip and is locale-free.
inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<double> class_scores(const TrainedModel& model,
                                        std::size_t node) {
  const std::size_t n_classes = model.params.b_cls.numel();
  std::vector<double> logits(n_classes);
  for (std::size_t l = 0; l < n_classes; ++l) {
    double acc = model.params.b_cls[l];
    for (std::size_t c = 0; c < model.hp.d; ++c)
      acc += model.h.at(node, c) * model.params.w_cls.at(c, l);
    logits[l] = acc;
  }
  if (model.hp.task_mode == TaskMode::kMultiLabel) {
    for (double& v : logits) v = 1.0 / (1.0 + std::exp(-v));
    return logits;
  }
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
  return logits;
}

// Linear-interpolation quantile over a sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// Average ranks with ties sharing the mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& a,
                       const std::vector<double>& b) {
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace detail

// Classification metrics of the stored model on the given target positions,
// scored from the stored embeddings through the stored classifier.
inline MetricReport evaluate_split(const TrainedModel& model,
                                   const std::vector<std::size_t>& nodes) {
  detail::require_trained(model);
  const std::size_t n_classes = model.params.b_cls.numel();
  std::vector<std::vector<int>> preds, truths;
  for (std::size_t node : nodes) {
    auto scores = detail::class_scores(model, node);
    Tensor s({n_classes});
    for (std::size_t l = 0; l < n_classes; ++l) s[l] = scores[l];
    preds.push_back(
        predict_labels(s, model.hp.task_mode, model.config.threshold));
    truths.push_back(model.labels[node]);
  }
  return micro_macro_f1(preds, truths, n_classes);
}

struct PathAttentionStats {
  std::string name;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double mean_gamma = 0.0;
  double single_path_micro_f1 = 0.0;
};

struct AttentionReport {
  std::vector<PathAttentionStats> paths;
  // Spearman correlation between per-path mean gamma and single-path F1.
  double rank_correlation = 0.0;
};

namespace detail {

// Trains a fresh affine classifier on the frozen per-path embeddings of the
// train split and returns its micro-F1 on the held-out positions.
inline double single_path_f1(const TrainedModel& model, std::size_t pi,
                             const std::vector<std::size_t>& fit_nodes,
                             const std::vector<std::size_t>& eval_nodes,
                             Rng& rng) {
  const std::size_t d = model.hp.d;
  const std::size_t n_classes = model.params.b_cls.numel();
  const double bound = std::sqrt(6.0 / static_cast<double>(d + n_classes));
  Tensor w({d, n_classes});
  for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
  Tensor b({n_classes});

  std::vector<std::vector<int>> fit_labels;
  for (std::size_t node : fit_nodes) fit_labels.push_back(model.labels[node]);

  auto h_row = [&](std::size_t node) {
    Tensor r({d});
    for (std::size_t c = 0; c < d; ++c) r[c] = model.h_per_path[pi].at(node, c);
    return r;
  };

  AdamState adam;
  std::vector<Tensor*> params = {&w, &b};
  for (int epoch = 0; epoch < 150; ++epoch) {
    ad::Tape t;
    ad::Value wv = t.leaf(w), bv = t.leaf(b);
    std::vector<ad::Value> scores;
    for (std::size_t node : fit_nodes)
      scores.push_back(
          classify(t, t.constant(h_row(node)), wv, bv, model.hp.task_mode));
    ad::Value loss =
        cross_entropy_loss(t, scores, fit_labels, model.hp.task_mode, n_classes);
    t.backward(loss);
    adam_step(params, {t.grad(wv), t.grad(bv)}, adam, 0.05);
  }

  std::vector<std::vector<int>> preds, truths;
  for (std::size_t node : eval_nodes) {
    ad::Tape t;
    ad::Value s = classify(t, t.constant(h_row(node)), t.constant(w),
                           t.constant(b), model.hp.task_mode);
    preds.push_back(predict_labels(t.value(s), model.hp.task_mode,
                                   model.config.threshold));
    truths.push_back(model.labels[node]);
  }
  return micro_macro_f1(preds, truths, n_classes).micro_f1;
}

}  // namespace detail

// Per meta path: box-plot statistics of the attention weights across all
// target nodes, plus the micro-F1 a fresh affine classifier reaches using
// that path's embeddings alone (fit on train, scored on test, falling back
// to val then train when splits are empty).
inline AttentionReport attention_report(const TrainedModel& model) {
  detail::require_trained(model);
  const std::size_t m = model.metapath_names.size();
  const std::size_t n = model.gamma.rows();

  const std::vector<std::size_t>& eval_nodes =
      !model.test_nodes.empty()
          ? model.test_nodes
          : (!model.val_nodes.empty() ? model.val_nodes : model.train_nodes);

  AttentionReport rep;
  Rng rng(model.config.seed, "pathcls");
  std::vector<double> means, f1s;
  for (std::size_t pi = 0; pi < m; ++pi) {
    PathAttentionStats st;
    st.name = model.metapath_names[pi];
    std::vector<double> col(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = model.gamma.at(i, pi);
      sum += col[i];
    }
    std::sort(col.begin(), col.end());
    st.min = col.front();
    st.q1 = detail::quantile_sorted(col, 0.25);
    st.median = detail::quantile_sorted(col, 0.5);
    st.q3 = detail::quantile_sorted(col, 0.75);
    st.max = col.back();
    st.mean_gamma = sum / static_cast<double>(n);
    st.single_path_micro_f1 =
        detail::single_path_f1(model, pi, model.train_nodes, eval_nodes, rng);
    means.push_back(st.mean_gamma);
    f1s.push_back(st.single_path_micro_f1);
    rep.paths.push_back(st);
  }
  rep.rank_correlation = detail::spearman(means, f1s);
  return rep;
}

// TSV rows: node_id then d embedding values, in target index order.
inline void export_embeddings(const TrainedModel& model,
                              const std::string& path) {
  detail::require_trained(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embeddings to '" + path + "'");
  for (std::size_t i = 0; i < model.target_ids.size(); ++i) {
    out << model.target_ids[i];
    for (std::size_t c = 0; c < model.hp.d; ++c)
      out << '\t' << detail::format_real(model.h.at(i, c));
    out << '\n';
  }
  if (!out) throw DataError("cannot write embeddings to '" + path + "'");
}

inline std::string format_metric_report(const MetricReport& rep) {
  std::ostringstream out;
  out << "n_eval: " << rep.n_eval << '\n';
  out << "micro_f1: " << detail::format_real(rep.micro_f1) << '\n';
  out << "macro_f1: " << detail::format_real(rep.macro_f1) << '\n';
  for (std::size_t c = 0; c < rep.per_class.size(); ++c) {
    const auto& cm = rep.per_class[c];
    out << "class_" << c << ": precision="
        << detail::format_real(cm.precision)
        << " recall=" << detail::format_real(cm.recall)
        << " f1=" << detail::format_real(cm.f1) << " support=" << cm.support
        << '\n';
  }
  return out.str();
}

inline std::string format_attention_report(const AttentionReport& rep) {
  std::ostringstream out;
  out << "rank_correlation: " << detail::format_real(rep.rank_correlation)
      << '\n';
  for (const auto& p : rep.paths) {
    out << "path " << p.name << ":\n";
    out << "  mean_gamma: " << detail::format_real(p.mean_gamma) << '\n';
    out << "  gamma_box: min=" << detail::format_real(p.min)
        << " q1=" << detail::format_real(p.q1)
        << " median=" << detail::format_real(p.median)
        << " q3=" << detail::format_real(p.q3)
        << " max=" << detail::format_real(p.max) << '\n';
    out << "  single_path_micro_f1: "
        << detail::format_real(p.single_path_micro_f1) << '\n';
  }
  return out.str();
}

// Flat table for plotting: one row per path.
inline std::string attention_flat_tsv(const AttentionReport& rep) {
  std::ostringstream out;
  out << "path\tmean_gamma\tmin\tq1\tmedian\tq3\tmax\tsingle_path_micro_f1\n";
  for (const auto& p : rep.paths) {
    out << p.name << '\t' << detail::format_real(p.mean_gamma) << '\t'
        << detail::format_real(p.min) << '\t' << detail::format_real(p.q1)
        << '\t' << detail::format_real(p.median) << '\t'
        << detail::format_real(p.q3) << '\t' << detail::format_real(p.max)
        << '\t' << detail::format_real(p.single_path_micro_f1) << '\n';
  }
  return out.str();
}

}  // namespace hahe
