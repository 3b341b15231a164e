#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dfd/cnn.hpp"
#include "dfd/config.hpp"
#include "dfd/dataset.hpp"
#include "dfd/features.hpp"
#include "dfd/spectral.hpp"
#include "dfd/svm.hpp"
#include "dfd/synthetic.hpp"

namespace dfd {

/// Everything one experiment grid needs.
struct ExperimentConfig {
  // data
  std::optional<std::filesystem::path> manifest;  // unset: synthetic data
  ClassSignatureSpec synthetic = desk_signature_spec();
  std::size_t per_class = 300;
  std::uint64_t data_seed = 2024;

  // protocol
  std::vector<double> fractions = {0.02, 0.04, 0.06, 0.08};
  double test_fraction = 1.0 / 3.0;
  double val_fraction = 1.0 / 3.0;
  double noise_fraction = 0.0;
  double noise_volume = 0.08;  // labeled volume used by the noise experiment
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  // features and models
  StftConfig feature_stft = StftConfig::fit_frames(64, 16, 32);
  FeatureOptions feature_options;
  StftConfig cnn_stft = [] {
    auto c = StftConfig::fit_frames(64, 16, 32);
    c.magnitude = MagnitudeMode::log1p_abs;
    return c;
  }();
  SvmHyperParams svm;
  std::vector<std::vector<FeatureId>> candidates;  // empty: the 15 single-feature sets
  std::size_t k = 2;
  std::vector<double> fusion_weights;  // empty: uniform
  std::vector<double> fusion_grid = {0.0, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::optional<double> min_confidence;

  std::size_t cnn_filters = 32;
  std::size_t cnn_fc_units = 64;
  std::size_t cnn_pool_h = 4;
  std::size_t cnn_pool_w = 8;
  Precision precision = Precision::f32;
  TrainConfig train = TrainConfig::desk();

  std::filesystem::path out_dir = "dfd_out";
  bool write_checkpoints = true;

  /// Desk-scale synthetic defaults (2 channels, 16x32 spectrograms).
  static ExperimentConfig desk();
  /// Full-size settings: 8 x 10240 signals, 256-point windows, 32x128x8 tensors,
  /// 10000 iterations of 256.
  static ExperimentConfig rig();

  /// Applies `key = value` overrides; unknown keys throw ConfigError.
  void apply(const KeyValueConfig& kv);
  void validate() const;
  std::vector<std::vector<FeatureId>> candidate_sets() const;
};

/// Dataset plus per-sample features and (unnormalized) CNN input tensors,
/// computed once and shared by every cell of a grid.
struct PreparedData {
  LabeledDataset dataset;
  std::vector<FeaturePool> pools;
  std::vector<SpectroTensor> tensors;
  std::unordered_map<std::string, std::size_t> index_of;  // sample id -> position
};

PreparedData prepare_data(const ExperimentConfig& cfg);

struct SvmRow {
  std::string model;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
};

/// Outcome of one (volume, seed) pipeline run.
struct CellResult {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::string condition = "clean";
  std::optional<std::string> error_stage;
  std::string error;

  std::vector<SvmRow> svm;  // one per candidate, candidate order
  std::vector<std::string> pool_models;
  double fusion_test = 0.0;
  double quasi_accuracy = 0.0;  // quasi labels vs the generator's labels
  std::size_t labeled = 0, train = 0, val = 0, unlabeled = 0, ats = 0, test = 0;
  double cnn_vanilla_train = 0.0, cnn_vanilla_test = 0.0;
  double cnn_t_train = 0.0, cnn_t_test = 0.0;
  std::vector<std::string> noisy_ids;

  bool ok() const { return !error_stage; }
  double best_svm_test() const;  // test accuracy of the best-validated candidate
};

struct CellOptions {
  std::optional<std::vector<double>> weights;  // overrides cfg.fusion_weights
  double noise_fraction = 0.0;
  std::string condition = "clean";
  bool train_vanilla = true;
  std::optional<std::filesystem::path> cell_dir;  // per-cell artifacts
};

/// Full pipeline for one labeled volume and seed: split, features, candidate
/// SVMs, ranking, pseudo-labeling, ATS, CNN-T and vanilla CNN, test evaluation.
/// Stage failures are captured in the result, not thrown.
CellResult run_cell(const ExperimentConfig& cfg, const PreparedData& data, double fraction, std::uint64_t seed,
                    const CellOptions& opts = {});

/// One cell per (volume, seed); writes svm_table.csv, cnn_table.csv and
/// errors.csv into cfg.out_dir, plus per-cell artifacts.
std::vector<CellResult> sweep_volumes(const ExperimentConfig& cfg, const PreparedData& data);

struct FusionRow {
  double weight = 0.0;
  std::uint64_t seed = 0;
  double svm_fusion_test = 0.0;
  double cnn_t_test = 0.0;
};

/// Two-model pool weighted (w, 1 - w) for each w in the grid, at the first volume.
/// Writes fusion_table.csv.
std::vector<FusionRow> sweep_fusion_weights(const ExperimentConfig& cfg, const PreparedData& data);

/// Clean vs 1/8-noisy labels at cfg.noise_volume. Writes noise_table.csv.
std::vector<CellResult> noise_experiment(const ExperimentConfig& cfg, const PreparedData& data, double noise_fraction);

struct BenchRow {
  std::size_t batch = 0;
  double total_s = 0.0;
  double per_sample_s = 0.0;
  double std_s = 0.0;  // std of total_s over repetitions
};

std::vector<BenchRow> bench_inference(const CnnModel& model, const std::vector<std::size_t>& batch_sizes,
                                      std::size_t repetitions = 10, std::size_t warmup = 2, std::uint64_t seed = 0);
void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

/// Number of worker threads: DFD_THREADS if set, else hardware concurrency.
std::size_t worker_threads();

}  // namespace dfd
