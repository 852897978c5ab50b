#include "semclip/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace semclip {

double auroc(const ScoredSet& set) {
  const std::size_t n = set.scores.size();
  if (n != set.labels.size() || n == 0) {
    throw std::invalid_argument("auroc: scores and labels must be non-empty and equal length");
  }
  std::int64_t positives = 0;
  for (int l : set.labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("auroc labels must be 0/1");
    positives += l;
  }
  const std::int64_t negatives = static_cast<std::int64_t>(n) - positives;
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("auroc needs at least one positive and one negative");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });

  // Midranks stay exact: a tie group of integer ranks averages to a
  // half-integer, and their sum is below 2^53 at any realistic size.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (set.labels[order[k]] == 1) rank_sum_pos += midrank;
    }
    i = j + 1;
  }

  const double u = rank_sum_pos - static_cast<double>(positives) *
                                      (static_cast<double>(positives) + 1.0) / 2.0;
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double f1_max_flat(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("f1_max: scores and labels must be non-empty and equal length");
  }
  std::int64_t hist_pos[256] = {0};
  std::int64_t hist_all[256] = {0};
  std::int64_t actual_pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    int bin = static_cast<int>(std::floor(s * 255.0));
    bin = std::clamp(bin, 0, 255);
    hist_all[bin] += 1;
    if (labels[i]) {
      hist_pos[bin] += 1;
      actual_pos += 1;
    }
  }
  if (actual_pos == 0) throw std::invalid_argument("f1_max needs at least one positive pixel");

  // Threshold k/255 predicts positive for every bin >= k; sweep from the
  // top so TP and predicted-positive counts are running suffix sums.
  double best = 0.0;
  std::int64_t tp = 0;
  std::int64_t predicted_pos = 0;
  for (int k = 255; k >= 0; --k) {
    tp += hist_pos[k];
    predicted_pos += hist_all[k];
    const double denom = static_cast<double>(predicted_pos + actual_pos);
    const double f1 = denom > 0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    best = std::max(best, f1);
  }
  return best;
}

double f1_max(const std::vector<Tensor>& score_maps, const std::vector<Tensor>& masks) {
  if (score_maps.size() != masks.size() || score_maps.empty()) {
    throw std::invalid_argument("f1_max: need matching non-empty map and mask lists");
  }
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
  for (std::size_t i = 0; i < score_maps.size(); ++i) {
    const Tensor& s = score_maps[i];
    const Tensor& m = masks[i];
    if (!s.same_shape(m)) throw std::invalid_argument("f1_max: map/mask shape mismatch");
    for (std::int64_t k = 0; k < s.size(); ++k) {
      scores.push_back(s.data()[k]);
      labels.push_back(m.data()[k] > 0.5f ? 1 : 0);
    }
  }
  return f1_max_flat(scores, labels);
}

MetricsReport classification_metrics(const std::vector<int>& predicted,
                                     const std::vector<int>& truth, int n_classes) {
  if (predicted.size() != truth.size() || predicted.empty()) {
    throw std::invalid_argument("classification_metrics: non-empty equal-length inputs required");
  }
  if (n_classes < 1) throw std::invalid_argument("n_classes must be >= 1");

  MetricsReport report;
  report.confusion.assign(static_cast<std::size_t>(n_classes),
                          std::vector<std::int64_t>(static_cast<std::size_t>(n_classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i];
    const int p = predicted[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes) {
      throw std::invalid_argument("class index out of range");
    }
    report.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] += 1;
  }

  std::int64_t trace = 0;
  double sum_p = 0.0, sum_r = 0.0, sum_f1 = 0.0;
  int present = 0;
  for (int c = 0; c < n_classes; ++c) {
    const std::int64_t tp = report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < n_classes; ++k) {
      row += report.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
      col += report.confusion[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
    }
    trace += tp;
    if (row == 0 && col == 0) continue;  // absent from truth and prediction
    present += 1;
    const double precision = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
    const double recall = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
    const double f1 =
        precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    sum_p += precision;
    sum_r += recall;
    sum_f1 += f1;
  }

  report.accuracy = static_cast<double>(trace) / static_cast<double>(truth.size());
  report.macro_precision = present > 0 ? sum_p / present : 0.0;
  report.macro_recall = present > 0 ? sum_r / present : 0.0;
  report.macro_f1 = present > 0 ? sum_f1 / present : 0.0;
  return report;
}

}  // namespace semclip
