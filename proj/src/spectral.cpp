#include "dfd/spectral.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dfd/binary_io.hpp"
#include "dfd/error.hpp"

namespace dfd {

StftConfig StftConfig::fit_frames(std::size_t window_len, std::size_t frames, std::size_t bins) {
  StftConfig cfg;
  cfg.window_len = window_len;
  cfg.hop.reset();
  cfg.frames = frames;
  cfg.retained_bins = bins;
  return cfg;
}

StftConfig StftConfig::with_hop(std::size_t window_len, std::size_t hop, std::size_t bins) {
  StftConfig cfg;
  cfg.window_len = window_len;
  cfg.hop = hop;
  cfg.frames.reset();
  cfg.retained_bins = bins;
  return cfg;
}

void StftConfig::validate() const {
  if (window_len < 2 || !is_power_of_two(window_len)) {
    throw InvalidWindow("window length must be a power of two >= 2, got " + std::to_string(window_len));
  }
  if (hop.has_value() == frames.has_value()) {
    throw InvalidWindow("exactly one of hop / frames must be set");
  }
  if (hop && *hop < 1) throw InvalidWindow("hop must be >= 1");
  if (frames && *frames < 2) throw InvalidWindow("fit-frames needs at least 2 frames");
  if (retained_bins < 1 || retained_bins > window_len / 2 + 1) {
    throw InvalidWindow("retained_bins must lie in [1, N/2 + 1]");
  }
}

std::size_t StftConfig::hop_for(std::size_t length) const {
  validate();
  if (length < window_len) {
    throw SignalTooShort("signal of " + std::to_string(length) + " points is shorter than the window");
  }
  if (hop) return *hop;
  if (length < window_len + (*frames - 1)) {
    throw SignalTooShort("signal of " + std::to_string(length) + " points cannot hold " +
                         std::to_string(*frames) + " distinct frames");
  }
  return (length - window_len) / (*frames - 1);
}

std::size_t StftConfig::frames_for(std::size_t length) const {
  const std::size_t h = hop_for(length);
  if (frames) return *frames;
  return (length - window_len) / h + 1;
}

std::vector<double> Spectrogram::magnitude() const {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::abs(values[i]);
  return out;
}

std::vector<double> window_weights(WindowKind kind, std::size_t n) {
  if (n < 2) throw InvalidWindow("window length must be >= 2");
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::hamming) {
    const double denom = static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom);
    }
    // Exact mirror symmetry regardless of cos rounding.
    for (std::size_t i = 0; i < n / 2; ++i) w[n - 1 - i] = w[i];
  }
  return w;
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::span<std::complex<double>> a) {
  const std::size_t n = a.size();
  if (n < 2 || !is_power_of_two(n)) {
    throw LengthError("FFT length must be a power of two >= 2, got " + std::to_string(n));
  }
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const auto w = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len));
      for (std::size_t start = 0; start < n; start += len) {
        const auto u = a[start + k];
        const auto v = a[start + k + half] * w;
        a[start + k] = u + v;
        a[start + k + half] = u - v;
      }
    }
  }
}

std::vector<std::complex<double>> fft_real(std::span<const double> x) {
  std::vector<std::complex<double>> out(x.begin(), x.end());
  fft_inplace(out);
  return out;
}

Spectrogram stft(std::span<const double> x, const StftConfig& cfg, double sample_rate) {
  const std::size_t n = cfg.window_len;
  const std::size_t hop = cfg.hop_for(x.size());
  const std::size_t frames = cfg.frames_for(x.size());
  const auto w = window_weights(cfg.window, n);

  Spectrogram s;
  s.frames = frames;
  s.bins = cfg.retained_bins;
  s.values.resize(frames * s.bins);
  s.bin_frequencies.resize(s.bins);
  for (std::size_t k = 0; k < s.bins; ++k) {
    s.bin_frequencies[k] = static_cast<double>(k) * sample_rate / static_cast<double>(n);
  }
  std::vector<double> frame(n);
  for (std::size_t m = 0; m < frames; ++m) {
    for (std::size_t i = 0; i < n; ++i) frame[i] = w[i] * x[m * hop + i];
    const auto spec = fft_real(frame);
    std::copy_n(spec.begin(), s.bins, s.values.begin() + static_cast<std::ptrdiff_t>(m * s.bins));
  }
  return s;
}

SpectroTensor spectro_tensor(const SignalSample& sample, const StftConfig& cfg, const ChannelStats* norm) {
  SpectroTensor t;
  t.channels = sample.n_channels;
  for (std::size_t c = 0; c < sample.n_channels; ++c) {
    const auto x = sample.channel_f64(c);
    const auto s = stft(x, cfg, sample.sample_rate);
    if (c == 0) {
      t.frames = s.frames;
      t.bins = s.bins;
      t.values.assign(t.size(), 0.0f);
    }
    for (std::size_t i = 0; i < s.frames * s.bins; ++i) {
      double m = std::abs(s.values[i]);
      if (cfg.magnitude == MagnitudeMode::log1p_abs) m = std::log1p(m);
      t.values[i * t.channels + c] = static_cast<float>(m);
    }
  }
  if (norm) normalize(t, *norm);
  return t;
}

ChannelStats channel_stats(std::span<const SpectroTensor> tensors) {
  if (tensors.empty()) throw EmptyInput("no tensors to fit statistics on");
  const std::size_t ch = tensors[0].channels;
  std::vector<double> sum(ch, 0.0), sq(ch, 0.0);
  std::size_t count = 0;
  for (const auto& t : tensors) {
    if (t.channels != ch) throw ShapeError("channel count differs between tensors");
    for (std::size_t i = 0; i < t.values.size(); ++i) {
      const double v = t.values[i];
      sum[i % ch] += v;
      sq[i % ch] += v * v;
    }
    count += t.frames * t.bins;
  }
  ChannelStats st;
  for (std::size_t c = 0; c < ch; ++c) {
    const double mean = sum[c] / static_cast<double>(count);
    const double var = std::max(0.0, sq[c] / static_cast<double>(count) - mean * mean);
    st.mean.push_back(mean);
    st.stddev.push_back(std::sqrt(var));
  }
  return st;
}

void normalize(SpectroTensor& t, const ChannelStats& stats) {
  if (stats.mean.size() != t.channels || stats.stddev.size() != t.channels) {
    throw ShapeError("normalization stats do not match tensor channels");
  }
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    const std::size_t c = i % t.channels;
    const double sd = stats.stddev[c] > 0.0 ? stats.stddev[c] : 1.0;
    t.values[i] = static_cast<float>((t.values[i] - stats.mean[c]) / sd);
  }
}

std::filesystem::path channel_stats_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".norm";
}

void save_channel_stats(const std::filesystem::path& checkpoint, const ChannelStats& stats) {
  const auto path = channel_stats_path(checkpoint);
  std::ofstream out(path);
  if (!out) throw MissingData("cannot write " + path.string());
  out.precision(17);
  out << "mean";
  for (double v : stats.mean) out << ' ' << v;
  out << "\nstddev";
  for (double v : stats.stddev) out << ' ' << v;
  out << '\n';
}

ChannelStats load_channel_stats(const std::filesystem::path& checkpoint) {
  const auto path = channel_stats_path(checkpoint);
  std::ifstream in(path);
  if (!in) throw MissingData("missing normalization file " + path.string());
  ChannelStats s;
  std::string line;
  for (auto* dst : {&s.mean, &s.stddev}) {
    if (!std::getline(in, line)) throw FormatError("truncated " + path.string());
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    for (double v; ls >> v;) dst->push_back(v);
  }
  if (s.mean.empty() || s.mean.size() != s.stddev.size()) throw FormatError("bad " + path.string());
  return s;
}

void write_spectro_tensor(const std::filesystem::path& path, const SpectroTensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingData("cannot write " + path.string());
  io::Writer w(out);
  w.magic("DFD1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(t.channels));
  w.u32(static_cast<std::uint32_t>(t.frames * t.bins));
  w.f64(static_cast<double>(t.frames));
  for (std::size_t c = 0; c < t.channels; ++c) {
    for (std::size_t i = 0; i < t.frames * t.bins; ++i) w.f32(t.values[i * t.channels + c]);
  }
}

SpectroTensor read_spectro_tensor(const std::filesystem::path& path) {
  const SignalSample raw = read_tensor_file(path);
  SpectroTensor t;
  t.channels = raw.n_channels;
  t.frames = static_cast<std::size_t>(raw.sample_rate);
  if (t.frames == 0 || raw.n_points % t.frames != 0) throw FormatError(path.string() + ": bad tensor dims");
  t.bins = raw.n_points / t.frames;
  t.values.resize(t.size());
  for (std::size_t c = 0; c < t.channels; ++c) {
    for (std::size_t i = 0; i < t.frames * t.bins; ++i) t.values[i * t.channels + c] = raw.data[c * raw.n_points + i];
  }
  return t;
}

}  // namespace dfd
