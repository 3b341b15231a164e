#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dfd {

/// counts[i * n_classes + j] = samples of true class i predicted as j.
struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<std::size_t> counts;

  std::size_t at(int truth, int pred) const {
    return counts[static_cast<std::size_t>(truth) * static_cast<std::size_t>(n_classes) +
                  static_cast<std::size_t>(pred)];
  }
  std::size_t total() const;
  /// Trace over total.
  double accuracy() const;
};

/// n_classes defaults to 1 + the largest label seen.
ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> truth, int n_classes = 0);

double accuracy(std::span<const int> preds, std::span<const int> truth);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

/// Numerically stable softmax.
std::vector<double> softmax(std::span<const double> logits);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace dfd
