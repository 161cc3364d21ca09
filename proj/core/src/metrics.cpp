#include "relearn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "relearn/error.hpp"

namespace relearn {

double cvrmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("cvrmse: length mismatch");
  if (truth.empty()) throw ShapeError("cvrmse: empty input");
  double sq = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = predicted[i] - truth[i];
    sq += d * d;
    sum += truth[i];
  }
  const double n = static_cast<double>(truth.size());
  const double mean = sum / n;
  if (mean == 0.0) throw UndefinedMetricError("cvrmse undefined: truth mean is zero");
  return std::sqrt(sq / n) / mean;
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Average ranks over ties, then Mann-Whitney U.
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("roc_auc undefined: only one class present");
  const double np = static_cast<double>(n_pos);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

}  // namespace relearn
