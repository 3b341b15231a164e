#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dfd/dataset.hpp"
#include "dfd/spectral.hpp"

namespace dfd {

enum class FeatureDomain { time, frequency };

/// The fifteen pool statistics. The first ten are time-domain.
enum class FeatureId {
  tim_abm, tim_var, tim_cre, tim_clf, tim_kur, tim_crf, tim_rms, tim_puf, tim_ske, tim_shf,
  fre_afr, fre_cre, fre_kur, fre_mea, fre_var,
};

inline constexpr std::size_t kNumFeatures = 15;
inline constexpr std::size_t kNumTimeFeatures = 10;

const std::array<FeatureId, kNumFeatures>& all_features();
std::string_view feature_name(FeatureId id);
FeatureDomain feature_domain(FeatureId id);
/// Parses "Fre-Mea" style names (case-insensitive); throws UnknownFeature.
FeatureId parse_feature(std::string_view name);
/// Parses a comma- or plus-separated list such as "Fre-Mea+Fre-Var".
std::vector<FeatureId> parse_feature_list(std::string_view list);
std::string feature_list_name(std::span<const FeatureId> ids);

struct TimeFeatures {
  double abm = 0, var = 0, cre = 0, clf = 0, kur = 0, crf = 0, rms = 0, puf = 0, ske = 0, shf = 0;
};

struct FrequencyFeatures {
  double afr = 0, cre = 0, kur = 0, mea = 0, var = 0;
};

/// Time-domain statistics on a raw waveform. Kurtosis and skewness are the raw
/// fourth and third moments; ratios with a zero denominator are 0.
TimeFeatures time_domain_features(std::span<const double> x);

/// Frequency-domain statistics of a non-negative magnitude profile X over
/// frequencies omega.
FrequencyFeatures frequency_domain_features(std::span<const double> X, std::span<const double> omega);

/// Where the Fre-* statistics read their spectrum from.
enum class FrequencySource {
  spectrogram_mean,  // per-bin mean of |s(k, m)| over frames
  whole_fft,         // |FFT| of the zero-padded whole signal, bins 0..N/2-1
};

/// Where the Tim-* statistics read their sequence from.
enum class TimeSource {
  waveform,          // the raw samples
  spectrogram_time,  // per-frame mean of |s(k, m)| over bins
};

struct FeatureOptions {
  FrequencySource frequency = FrequencySource::spectrogram_mean;
  TimeSource time = TimeSource::waveform;
};

/// All fifteen statistics for one sample, one value per channel each.
struct FeaturePool {
  std::size_t n_channels = 0;
  std::array<std::vector<double>, kNumFeatures> values;
  StftConfig source_config;

  const std::vector<double>& operator[](FeatureId id) const { return values[static_cast<std::size_t>(id)]; }
};

struct FeatureVector {
  std::vector<double> values;
  std::vector<FeatureId> ids;
  std::size_t n_channels = 0;
};

FeaturePool extract_feature_pool(const SignalSample& sample, const StftConfig& cfg,
                                 const FeatureOptions& opts = {});

std::vector<FeaturePool> extract_feature_pools(const LabeledDataset& ds, const StftConfig& cfg,
                                               const FeatureOptions& opts = {});

/// Concatenates the selected statistics in the given order.
FeatureVector combine_features(const FeaturePool& pool, std::span<const FeatureId> ids);

using FeatureMatrix = std::vector<std::vector<double>>;

FeatureMatrix feature_matrix(std::span<const FeaturePool> pools, std::span<const FeatureId> ids);

/// One row per sample: id, label, then every feature x channel column.
void write_feature_csv(const std::filesystem::path& path, const LabeledDataset& ds,
                       std::span<const FeaturePool> pools);

}  // namespace dfd
