#pragma once

#include <complex>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "dfd/dataset.hpp"

namespace dfd {

enum class WindowKind { hamming, rectangular };
enum class MagnitudeMode { abs, log1p_abs };

/// STFT parameters. Exactly one of `hop` / `frames` selects the frame policy:
/// an explicit hop, or "fit-frames" where the hop is derived so that exactly
/// `frames` windows are taken from the signal.
struct StftConfig {
  std::size_t window_len = 256;
  std::optional<std::size_t> hop;
  std::optional<std::size_t> frames = 32;
  WindowKind window = WindowKind::hamming;
  std::size_t retained_bins = 128;
  MagnitudeMode magnitude = MagnitudeMode::abs;

  static StftConfig fit_frames(std::size_t window_len, std::size_t frames, std::size_t bins);
  static StftConfig with_hop(std::size_t window_len, std::size_t hop, std::size_t bins);

  void validate() const;
  /// Hop actually used for a signal of `length` points.
  std::size_t hop_for(std::size_t length) const;
  std::size_t frames_for(std::size_t length) const;
};

/// Complex STFT grid, frames x bins, row-major by frame.
struct Spectrogram {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<std::complex<double>> values;
  std::vector<double> bin_frequencies;

  std::complex<double> at(std::size_t frame, std::size_t bin) const { return values[frame * bins + bin]; }
  /// |s(k, m)|, same layout as `values`.
  std::vector<double> magnitude() const;
};

/// Per-channel normalization statistics for spectro tensors.
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Stacked per-channel spectrogram magnitudes, layout (frames, bins, channels).
struct SpectroTensor {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t channels = 0;
  std::vector<float> values;

  std::size_t size() const { return frames * bins * channels; }
  float at(std::size_t t, std::size_t b, std::size_t c) const { return values[(t * bins + b) * channels + c]; }
};

std::vector<double> window_weights(WindowKind kind, std::size_t n);

bool is_power_of_two(std::size_t n);

/// In-place iterative radix-2 decimation-in-time FFT.
void fft_inplace(std::span<std::complex<double>> data);

/// X[k] = sum_n x[n] exp(-2 pi i k n / N) for all N bins.
std::vector<std::complex<double>> fft_real(std::span<const double> x);

Spectrogram stft(std::span<const double> x, const StftConfig& cfg, double sample_rate);

SpectroTensor spectro_tensor(const SignalSample& sample, const StftConfig& cfg,
                             const ChannelStats* norm = nullptr);

/// Mean and standard deviation of each channel over a set of tensors.
ChannelStats channel_stats(std::span<const SpectroTensor> tensors);

/// Standardizes a tensor in place with previously fitted statistics.
void normalize(SpectroTensor& t, const ChannelStats& stats);

/// Text sidecar "<checkpoint>.norm" holding the stats a CNN was trained with.
std::filesystem::path channel_stats_path(const std::filesystem::path& checkpoint);
void save_channel_stats(const std::filesystem::path& checkpoint, const ChannelStats& stats);
ChannelStats load_channel_stats(const std::filesystem::path& checkpoint);

/// Serializes into the DFD1 container: n_channels = channels,
/// n_points = frames * bins, the f64 slot carries the frame count, payload
/// channel-major.
void write_spectro_tensor(const std::filesystem::path& path, const SpectroTensor& t);
SpectroTensor read_spectro_tensor(const std::filesystem::path& path);

}  // namespace dfd
