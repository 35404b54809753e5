#pragma once

#include "deepfm/common.hpp"

#include <algorithm>

namespace deepfm {

/// counts[true][predicted]
inline std::vector<std::vector<std::size_t>> confusion_matrix(
    std::span<const std::size_t> predictions, std::span<const std::size_t> labels,
    std::size_t classes) {
  if (predictions.size() != labels.size())
    throw ShapeError("confusion_matrix: predictions and labels differ in length");
  std::vector<std::vector<std::size_t>> counts(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] >= classes || predictions[k] >= classes)
      throw ShapeError("confusion_matrix: class index out of range");
    ++counts[labels[k]][predictions[k]];
  }
  return counts;
}

/// Mean per-class recall over the classes present in `labels`.
inline double balanced_accuracy(std::span<const std::size_t> predictions,
                                std::span<const std::size_t> labels, std::size_t classes) {
  if (labels.empty()) throw DataError("balanced_accuracy: empty input");
  const auto counts = confusion_matrix(predictions, labels, classes);
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t total = 0;
    for (std::size_t p = 0; p < classes; ++p) total += counts[c][p];
    if (total == 0) continue;
    recall_sum += static_cast<double>(counts[c][c]) / static_cast<double>(total);
    ++present;
  }
  return recall_sum / static_cast<double>(present);
}

inline double median(std::vector<double> values) {
  if (values.empty()) throw DataError("median of empty sequence");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

}  // namespace deepfm
