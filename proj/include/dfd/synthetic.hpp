#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dfd/dataset.hpp"

namespace dfd {

/// Vibration signature of one machine condition.
struct ClassSignature {
  std::string name;
  /// (multiple of the rotation frequency, amplitude)
  std::vector<std::pair<double, double>> harmonics;
  double impulse_rate_hz = 0.0;
  double impulse_amplitude = 0.0;
  /// Depth of amplitude modulation at the rotation frequency, in [0, 1].
  double am_depth = 0.0;
};

/// Parameters of the seeded synthetic fault-signal generator.
struct ClassSignatureSpec {
  std::vector<ClassSignature> classes;
  double rotation_hz = 25.0;
  double noise_std = 0.5;
  std::size_t n_channels = 8;
  std::size_t n_points = 10240;
  double sample_rate = 1280.0;
  /// Per-sample relative jitter of the rotation frequency and of all amplitudes.
  double speed_jitter = 0.01;
  double amplitude_jitter = 0.1;
  /// Centre frequency and decay time constant of the ringing excited by each impulse.
  double resonance_hz = 400.0;
  double resonance_decay_s = 0.004;

  /// Throws SpecError on negative amplitudes, aliasing, or two indistinguishable classes.
  void validate() const;
};

/// Seven conditions shaped after a rotor rig (four unbalance grades, an
/// impulsive defect, pedestal looseness and normal) at 8 x 10240 points, 1280 Hz.
ClassSignatureSpec rig_signature_spec();

/// Same seven conditions, reduced to 2 channels x 2048 points so that full
/// experiment grids run in minutes on one CPU core.
ClassSignatureSpec desk_signature_spec();

/// Balanced dataset of n_per_class samples per class. Sample k of class c is
/// generated from its own stream derived from (seed, c, k), so the result is
/// a pure function of the arguments.
LabeledDataset generate_synthetic(const ClassSignatureSpec& spec, std::size_t n_per_class,
                                  std::uint64_t seed);

}  // namespace dfd
