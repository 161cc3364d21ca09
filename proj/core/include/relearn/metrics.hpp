#pragma once

#include <cstdint>
#include <span>

namespace relearn {

/// Root-mean-square error divided by the mean of the truth. Throws
/// UndefinedMetricError when the truth mean is zero, ShapeError on length
/// mismatch or empty input.
double cvrmse(std::span<const double> predicted, std::span<const double> truth);

/// Area under the ROC curve via the rank statistic; tied scores count half.
/// Throws UndefinedMetricError when only one class is present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

}  // namespace relearn
