#include "dfd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dfd/error.hpp"

namespace dfd {

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

double ConfusionMatrix::accuracy() const {
  std::size_t diag = 0;
  for (int i = 0; i < n_classes; ++i) diag += at(i, i);
  const std::size_t n = total();
  if (n == 0) throw EmptyInput("confusion matrix is empty");
  return static_cast<double>(diag) / static_cast<double>(n);
}

ConfusionMatrix confusion_matrix(std::span<const int> preds, std::span<const int> truth, int n_classes) {
  if (preds.size() != truth.size()) throw ShapeError("prediction and label counts differ");
  if (preds.empty()) throw EmptyInput("no predictions to score");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] < 0 || truth[i] < 0) throw ShapeError("negative class index");
    n_classes = std::max({n_classes, preds[i] + 1, truth[i] + 1});
  }
  ConfusionMatrix cm;
  cm.n_classes = n_classes;
  cm.counts.assign(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ++cm.counts[static_cast<std::size_t>(truth[i]) * static_cast<std::size_t>(n_classes) +
                static_cast<std::size_t>(preds[i])];
  }
  return cm;
}

double accuracy(std::span<const int> preds, std::span<const int> truth) {
  return confusion_matrix(preds, truth).accuracy();
}

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw EmptyInput("argmax of empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw EmptyInput("softmax of empty vector");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    sum += p[i];
  }
  for (auto& x : p) x /= sum;
  return p;
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace dfd
