#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dfd/dataset.hpp"
#include "dfd/features.hpp"
#include "dfd/svm.hpp"

namespace dfd {

struct PoolEntry {
  SvmModel model;
  double val_accuracy = 0.0;
  std::size_t original_index = 0;

  const std::vector<FeatureId>& feature_ids() const { return model.feature_ids; }
};

/// Top-k candidate models, best validation accuracy first.
struct ModelPool {
  std::vector<PoolEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

/// Non-negative fusion weights, normalized to sum 1 on construction.
class FusionWeights {
 public:
  explicit FusionWeights(std::vector<double> w);
  static FusionWeights uniform(std::size_t n);
  /// (w, 1 - w) for a two-model pool.
  static FusionWeights pair(double w);

  std::span<const double> values() const { return w_; }
  std::size_t size() const { return w_.size(); }

 private:
  std::vector<double> w_;
};

/// Indices of the k best scores, descending; equal scores keep original order.
std::vector<std::size_t> rank_by_accuracy(std::span<const double> accuracies, std::size_t k);

/// Scores every model on the validation pools (each on its own feature
/// combination) and keeps the top k.
ModelPool rank_and_select(std::vector<SvmModel> models, std::span<const FeaturePool> val_pools,
                          std::span<const int> val_labels, std::size_t k);

struct FusionResult {
  int label = 0;
  std::vector<double> probabilities;
};

/// Weighted sum of the entries' probability vectors; label = argmax (lowest index on ties).
FusionResult fuse(const ModelPool& pool, const FusionWeights& w, const FeaturePool& x);

/// Same fusion on precomputed per-entry probability vectors.
FusionResult fuse_probabilities(std::span<const std::vector<double>> per_model, const FusionWeights& w);

struct QuasiLabeledDataset {
  LabeledDataset data;  // provenance quasi, every sample labeled
  std::vector<std::vector<double>> probabilities;
};

/// Labels every unlabeled sample with the fused pool prediction. With a
/// confidence threshold, samples whose fused top probability falls below it
/// are left out.
QuasiLabeledDataset pseudo_label(const ModelPool& pool, const FusionWeights& w, const LabeledDataset& unlabeled,
                                 std::span<const FeaturePool> unlabeled_pools,
                                 std::optional<double> min_confidence = std::nullopt);

/// Quasi-labeled samples first, then the fine-labeled training samples.
LabeledDataset build_ats(const QuasiLabeledDataset& quasi, const LabeledDataset& train);

void write_pool_manifest(const std::filesystem::path& path, const ModelPool& pool);
void write_quasi_csv(const std::filesystem::path& path, const QuasiLabeledDataset& quasi);

}  // namespace dfd
