#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dfd {

enum class Provenance { real, synthetic, quasi };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// One multi-channel recording. Samples are stored channel-major in 32-bit
/// floats, the same precision as the on-disk tensor files.
struct SignalSample {
  std::string id;
  std::size_t n_channels = 0;
  std::size_t n_points = 0;
  double sample_rate = 0.0;
  std::vector<float> data;  // n_channels * n_points, channel-major
  std::optional<int> label;
  Provenance provenance = Provenance::real;

  std::span<const float> channel(std::size_t c) const {
    return {data.data() + c * n_points, n_points};
  }
  std::span<float> channel(std::size_t c) { return {data.data() + c * n_points, n_points}; }
  std::vector<double> channel_f64(std::size_t c) const;
};

struct LabeledDataset {
  std::vector<std::string> class_names;
  std::vector<SignalSample> samples;
  Provenance provenance = Provenance::real;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  /// Empty dataset sharing this dataset's class names and provenance.
  LabeledDataset like() const { return {class_names, {}, provenance}; }

  /// Throws SpecError if any dataset invariant is broken (shared shape,
  /// unique ids, finite values, labels in range, at least two classes).
  void validate() const;

  std::vector<int> labels() const;  // throws ShapeError if any sample is unlabeled
  std::vector<std::size_t> class_counts() const;
};

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset val;
  std::uint64_t seed = 0;
};

// ---- file I/O ----------------------------------------------------------------

void write_tensor_file(const std::filesystem::path& path, const SignalSample& s);
/// Reads a DFD1 tensor file into a sample (id/label left empty).
SignalSample read_tensor_file(const std::filesystem::path& path);

/// Writes `dir/manifest.txt` plus one tensor file per sample; returns the manifest path.
std::filesystem::path save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir);
LabeledDataset load_dataset(const std::filesystem::path& manifest);

/// Converts plain CSV (one column per channel, optional non-numeric header
/// row) into a sample.
SignalSample sample_from_csv(const std::filesystem::path& csv, double sample_rate, std::string id,
                             std::optional<int> label);

// ---- sampling ----------------------------------------------------------------

/// Keeps exactly `per_class` samples of every class (seeded choice).
LabeledDataset stratified_take(const LabeledDataset& ds, std::size_t per_class, std::uint64_t seed);

/// Keeps floor(fraction * count_c) samples of each class c.
LabeledDataset stratified_subsample(const LabeledDataset& ds, double fraction, std::uint64_t seed);

/// Stratified split; each class contributes round-half-up(val_fraction * count_c)
/// samples to the validation side.
DatasetSplit split_labeled(const LabeledDataset& ds, double val_fraction, std::uint64_t seed);

/// Samples of `ds` whose ids do not appear in `exclude`, in original order.
LabeledDataset difference(const LabeledDataset& ds, const LabeledDataset& exclude);

/// Redraws the label of exactly round(fraction * |ds|) samples uniformly over
/// all classes. The affected ids are appended to `touched` when given.
LabeledDataset inject_label_noise(const LabeledDataset& ds, double fraction, std::uint64_t seed,
                                  std::vector<std::string>* touched = nullptr);

}  // namespace dfd
