#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dfd/features.hpp"

namespace dfd {

enum class KernelKind { linear, rbf };

struct SvmHyperParams {
  KernelKind kernel = KernelKind::rbf;
  /// RBF width; unset means 1 / (d * mean variance of the standardized features).
  std::optional<double> gamma;
  double c_reg = 1.0;
  double tol = 1e-3;
  std::size_t max_passes = 200;
  /// Permutes the scan order used to break ties in working-set selection.
  std::uint64_t seed = 0;
};

/// Kernel evaluation on already-standardized vectors.
double kernel_value(KernelKind kind, double gamma, std::span<const double> a, std::span<const double> b);

/// Dual solution of one binary soft-margin problem, y in {-1, +1}.
struct BinarySolution {
  std::vector<double> alpha;
  double bias = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Sequential minimal optimization with maximal-violating-pair / second-order
/// working-set selection. Stops once the KKT gap max_up(-y G) - min_low(-y G)
/// drops below `tol`, or after `max_iterations` pair updates. `gram` is the
/// n x n kernel matrix, row-major.
BinarySolution solve_smo(std::span<const double> gram, std::span<const int> y, double c_reg, double tol,
                         std::size_t max_iterations, std::uint64_t seed = 0);

struct BinarySvm {
  std::vector<std::vector<double>> support;  // standardized support vectors
  std::vector<double> coef;                  // alpha_i * y_i
  double bias = 0.0;

  double decision(KernelKind kind, double gamma, std::span<const double> z) const;
};

/// One-vs-rest multi-class SVM over a fixed feature combination.
struct SvmModel {
  SvmHyperParams hp;
  double gamma = 0.0;
  int n_classes = 0;
  std::vector<FeatureId> feature_ids;
  std::vector<double> mean;
  std::vector<double> scale;
  std::vector<BinarySvm> machines;
  double train_accuracy = 0.0;
  bool converged = true;

  std::size_t width() const { return mean.size(); }
  std::vector<double> standardize(std::span<const double> x) const;
  std::vector<double> decision_values(std::span<const double> x) const;
};

/// Trains one binary machine per class on z-scored features. Classes with no
/// training sample get a machine that always answers "not this class".
SvmModel train_svm(const FeatureMatrix& x, std::span<const int> y, int n_classes, const SvmHyperParams& hp,
                   std::vector<FeatureId> feature_ids = {});

/// Softmax of the one-vs-rest decision values.
std::vector<double> svm_predict_proba(const SvmModel& model, std::span<const double> x);
int svm_predict(const SvmModel& model, std::span<const double> x);
std::vector<int> svm_predict_all(const SvmModel& model, const FeatureMatrix& x);

void save_svm(const std::filesystem::path& path, const SvmModel& model);
SvmModel load_svm(const std::filesystem::path& path);

}  // namespace dfd
