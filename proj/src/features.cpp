#include "dfd/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "dfd/error.hpp"

namespace dfd {

namespace {

constexpr std::array<std::string_view, kNumFeatures> kNames = {
    "Tim-Abm", "Tim-Var", "Tim-Cre", "Tim-Clf", "Tim-Kur", "Tim-Crf", "Tim-Rms", "Tim-Puf",
    "Tim-Ske", "Tim-Shf", "Fre-Afr", "Fre-Cre", "Fre-Kur", "Fre-Mea", "Fre-Var",
};

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

void check_finite(std::span<const double> x) {
  for (double v : x) {
    if (!std::isfinite(v)) throw NonFinite("feature input contains a non-finite value");
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::array<FeatureId, kNumFeatures>& all_features() {
  static const std::array<FeatureId, kNumFeatures> ids = [] {
    std::array<FeatureId, kNumFeatures> a{};
    for (std::size_t i = 0; i < kNumFeatures; ++i) a[i] = static_cast<FeatureId>(i);
    return a;
  }();
  return ids;
}

std::string_view feature_name(FeatureId id) { return kNames.at(static_cast<std::size_t>(id)); }

FeatureDomain feature_domain(FeatureId id) {
  return static_cast<std::size_t>(id) < kNumTimeFeatures ? FeatureDomain::time : FeatureDomain::frequency;
}

FeatureId parse_feature(std::string_view name) {
  const auto want = lower(trim(name));
  for (std::size_t i = 0; i < kNumFeatures; ++i) {
    if (lower(kNames[i]) == want) return static_cast<FeatureId>(i);
  }
  throw UnknownFeature("unknown feature '" + std::string(name) + "'");
}

std::vector<FeatureId> parse_feature_list(std::string_view list) {
  std::vector<FeatureId> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto end = list.find_first_of(",+", start);
    const auto token = trim(list.substr(start, end == std::string_view::npos ? end : end - start));
    if (!token.empty()) out.push_back(parse_feature(token));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  if (out.empty()) throw EmptyCombination("empty feature list");
  return out;
}

std::string feature_list_name(std::span<const FeatureId> ids) {
  std::string out;
  for (auto id : ids) {
    if (!out.empty()) out += '+';
    out += feature_name(id);
  }
  return out;
}

TimeFeatures time_domain_features(std::span<const double> x) {
  if (x.empty()) throw EmptyInput("time-domain features need at least one point");
  check_finite(x);
  const double n = static_cast<double>(x.size());
  double sum = 0, sum_abs = 0, sum2 = 0, sum3 = 0, sum4 = 0, peak = 0;
  for (double v : x) {
    const double v2 = v * v;
    sum += v;
    sum_abs += std::abs(v);
    sum2 += v2;
    sum3 += v2 * v;
    sum4 += v2 * v2;
    peak = std::max(peak, std::abs(v));
  }
  const double mean = sum / n;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);

  TimeFeatures f;
  f.abm = sum_abs / n;
  f.var = var / n;
  f.cre = peak;
  f.kur = sum4 / n;
  f.ske = sum3 / n;
  f.rms = std::sqrt(sum2 / n);
  f.clf = safe_div(peak, f.abm * f.abm);
  f.crf = safe_div(peak, f.rms);
  f.puf = safe_div(peak, f.abm);
  f.shf = safe_div(f.rms, f.abm);
  return f;
}

FrequencyFeatures frequency_domain_features(std::span<const double> X, std::span<const double> omega) {
  if (X.size() != omega.size()) throw ShapeError("spectrum and frequency vectors differ in length");
  if (X.empty()) throw EmptyInput("frequency-domain features need at least one bin");
  check_finite(X);
  check_finite(omega);
  const double n = static_cast<double>(X.size());
  double sum = 0, weighted = 0, sum4 = 0, peak = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    if (X[i] < 0.0) throw ShapeError("spectrum magnitudes must be non-negative");
    sum += X[i];
    weighted += omega[i] * X[i];
    sum4 += X[i] * X[i] * X[i] * X[i];
    peak = std::max(peak, std::abs(X[i]));
  }
  const double mean = sum / n;
  double var = 0;
  for (double v : X) var += (v - mean) * (v - mean);

  FrequencyFeatures f;
  f.afr = safe_div(weighted, sum);
  f.cre = peak;
  f.kur = sum4 / n;
  f.mea = mean;
  f.var = var / n;
  return f;
}

FeaturePool extract_feature_pool(const SignalSample& sample, const StftConfig& cfg, const FeatureOptions& opts) {
  StftConfig plain = cfg;
  plain.magnitude = MagnitudeMode::abs;

  FeaturePool pool;
  pool.n_channels = sample.n_channels;
  pool.source_config = cfg;
  for (auto& v : pool.values) v.reserve(sample.n_channels);

  for (std::size_t c = 0; c < sample.n_channels; ++c) {
    const auto x = sample.channel_f64(c);
    std::optional<Spectrogram> spec;
    if (opts.frequency == FrequencySource::spectrogram_mean || opts.time == TimeSource::spectrogram_time) {
      spec = stft(x, plain, sample.sample_rate);
    }

    TimeFeatures tf;
    if (opts.time == TimeSource::waveform) {
      tf = time_domain_features(x);
    } else {
      std::vector<double> profile(spec->frames, 0.0);
      for (std::size_t m = 0; m < spec->frames; ++m) {
        for (std::size_t k = 0; k < spec->bins; ++k) profile[m] += std::abs(spec->at(m, k));
        profile[m] /= static_cast<double>(spec->bins);
      }
      tf = time_domain_features(profile);
    }

    std::vector<double> X, omega;
    if (opts.frequency == FrequencySource::spectrogram_mean) {
      X.assign(spec->bins, 0.0);
      for (std::size_t m = 0; m < spec->frames; ++m) {
        for (std::size_t k = 0; k < spec->bins; ++k) X[k] += std::abs(spec->at(m, k));
      }
      for (auto& v : X) v /= static_cast<double>(spec->frames);
      omega = spec->bin_frequencies;
    } else {
      std::size_t n = 2;
      while (n < x.size()) n <<= 1;
      std::vector<double> padded(x);
      padded.resize(n, 0.0);
      const auto full = fft_real(padded);
      X.resize(n / 2);
      omega.resize(n / 2);
      for (std::size_t k = 0; k < n / 2; ++k) {
        X[k] = std::abs(full[k]);
        omega[k] = static_cast<double>(k) * sample.sample_rate / static_cast<double>(n);
      }
    }
    const auto ff = frequency_domain_features(X, omega);

    const double row[kNumFeatures] = {tf.abm, tf.var, tf.cre, tf.clf, tf.kur, tf.crf, tf.rms, tf.puf,
                                      tf.ske, tf.shf, ff.afr, ff.cre, ff.kur, ff.mea, ff.var};
    for (std::size_t i = 0; i < kNumFeatures; ++i) pool.values[i].push_back(row[i]);
  }
  return pool;
}

std::vector<FeaturePool> extract_feature_pools(const LabeledDataset& ds, const StftConfig& cfg,
                                               const FeatureOptions& opts) {
  std::vector<FeaturePool> out;
  out.reserve(ds.size());
  for (const auto& s : ds.samples) out.push_back(extract_feature_pool(s, cfg, opts));
  return out;
}

FeatureVector combine_features(const FeaturePool& pool, std::span<const FeatureId> ids) {
  if (ids.empty()) throw EmptyCombination("no features selected");
  FeatureVector fv;
  fv.n_channels = pool.n_channels;
  fv.ids.assign(ids.begin(), ids.end());
  fv.values.reserve(ids.size() * pool.n_channels);
  for (auto id : ids) {
    const auto idx = static_cast<std::size_t>(id);
    if (idx >= kNumFeatures || pool.values[idx].size() != pool.n_channels) {
      throw UnknownFeature("feature not present in pool");
    }
    fv.values.insert(fv.values.end(), pool.values[idx].begin(), pool.values[idx].end());
  }
  return fv;
}

FeatureMatrix feature_matrix(std::span<const FeaturePool> pools, std::span<const FeatureId> ids) {
  FeatureMatrix m;
  m.reserve(pools.size());
  for (const auto& p : pools) m.push_back(combine_features(p, ids).values);
  return m;
}

void write_feature_csv(const std::filesystem::path& path, const LabeledDataset& ds,
                       std::span<const FeaturePool> pools) {
  if (pools.size() != ds.size()) throw ShapeError("one feature pool per sample expected");
  std::ofstream out(path);
  if (!out) throw MissingData("cannot write " + path.string());
  out << "id,label";
  const std::size_t ch = pools.empty() ? 0 : pools[0].n_channels;
  for (auto id : all_features()) {
    for (std::size_t c = 0; c < ch; ++c) out << ',' << feature_name(id) << '[' << c << ']';
  }
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    out << s.id << ',' << (s.label ? std::to_string(*s.label) : "");
    for (const auto& v : pools[i].values) {
      for (double x : v) out << ',' << x;
    }
    out << '\n';
  }
}

}  // namespace dfd
