#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "hahe/errors.hpp"
#include "hahe/model.hpp"
#include "hahe/tensor.hpp"

namespace hahe {

// Turns a score vector into a predicted label set: argmax for single-label
// (ties break to the lowest class index), threshold for multi-label.
inline std::vector<int> predict_labels(const Tensor& scores, TaskMode mode,
                                       double threshold = 0.5) {
  if (scores.rank() != 1 || scores.numel() == 0)
    throw std::invalid_argument("predict_labels: scores must be a non-empty vector");
  if (mode == TaskMode::kSingleLabel) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < scores.numel(); ++l)
      if (scores[l] > scores[best]) best = l;
    return {static_cast<int>(best)};
  }
  std::vector<int> out;
  for (std::size_t l = 0; l < scores.numel(); ++l)
    if (scores[l] > threshold) out.push_back(static_cast<int>(l));
  return out;
}

struct ClassMetrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // tp + fn
};

struct MetricReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::size_t n_eval = 0;
};

// Pooled-count micro-F1 and unweighted-mean macro-F1 over label sets.
// Classes that never occur in the truths contribute 0 to the macro mean.
inline MetricReport micro_macro_f1(
    const std::vector<std::vector<int>>& predictions,
    const std::vector<std::vector<int>>& truths, std::size_t num_classes) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument("micro_macro_f1: prediction/truth size mismatch");
  if (predictions.empty()) throw DataError("micro_macro_f1: empty evaluation set");

  MetricReport rep;
  rep.n_eval = predictions.size();
  rep.per_class.resize(num_classes);
  auto has = [](const std::vector<int>& set, int label) {
    return std::find(set.begin(), set.end(), label) != set.end();
  };
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    for (std::size_t c = 0; c < num_classes; ++c) {
      const bool pred = has(predictions[i], static_cast<int>(c));
      const bool truth = has(truths[i], static_cast<int>(c));
      if (pred && truth) ++rep.per_class[c].tp;
      if (pred && !truth) ++rep.per_class[c].fp;
      if (!pred && truth) ++rep.per_class[c].fn;
    }
  }

  std::size_t tp = 0, fp = 0, fn = 0;
  double f1_sum = 0.0;
  for (auto& m : rep.per_class) {
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
    m.support = m.tp + m.fn;
    if (m.tp + m.fp > 0)
      m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    if (m.tp + m.fn > 0)
      m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    if (m.precision + m.recall > 0.0)
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    f1_sum += m.f1;
  }
  if (2 * tp + fp + fn > 0)
    rep.micro_f1 = 2.0 * static_cast<double>(tp) /
                   static_cast<double>(2 * tp + fp + fn);
  rep.macro_f1 = num_classes == 0 ? 0.0 : f1_sum / static_cast<double>(num_classes);
  return rep;
}

}  // namespace hahe
