#pragma once

#include <cstdint>
#include <vector>

#include "semclip/tensor.hpp"

namespace semclip {

struct ScoredSet {
  std::vector<float> scores;
  std::vector<int> labels;  // {0, 1}; both values must be present
};

/// Rank-based Mann-Whitney AUROC with midrank tie handling. Equals the
/// pairwise win count with half credit for ties.
double auroc(const ScoredSet& set);

/// Pooled pixel-level F1 over 256 evenly spaced thresholds in [0,1];
/// a pixel is predicted positive when score >= threshold.
double f1_max(const std::vector<Tensor>& score_maps, const std::vector<Tensor>& masks);
double f1_max_flat(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels);

struct MetricsReport {
  double iauroc = 0.0;
  double pauroc = 0.0;
  double f1max = 0.0;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::vector<std::vector<std::int64_t>> confusion;  // rows = truth, cols = predicted
};

/// Confusion matrix plus accuracy and macro-averaged precision/recall/F1;
/// classes absent from both truth and prediction are excluded from the
/// macro means. Does not touch the AUROC/F1-max fields.
MetricsReport classification_metrics(const std::vector<int>& predicted,
                                     const std::vector<int>& truth, int n_classes);

}  // namespace semclip
