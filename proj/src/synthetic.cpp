#include "dfd/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "dfd/error.hpp"
#include "dfd/random.hpp"

namespace dfd {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

bool same_signature(const ClassSignature& a, const ClassSignature& b) {
  return a.harmonics == b.harmonics && a.impulse_rate_hz == b.impulse_rate_hz &&
         a.impulse_amplitude == b.impulse_amplitude && a.am_depth == b.am_depth;
}

std::vector<ClassSignature> rig_classes() {
  return {
      {"RU1", {{1, 1.3}, {2, 0.2}}, 0, 0, 0},
      {"RU3", {{1, 1.9}, {2, 0.2}}, 0, 0, 0},
      {"RU5", {{1, 2.5}, {2, 0.2}}, 0, 0, 0},
      {"RU7", {{1, 3.3}, {2, 0.2}}, 0, 0, 0},
      {"PPB", {{1, 1.0}, {2, 0.2}}, 25.0, 1.2, 0},
      {"PL", {{1, 1.0}, {2, 0.6}, {3, 0.45}}, 0, 0, 0.3},
      {"N", {{1, 1.0}, {2, 0.2}}, 0, 0, 0},
  };
}

}  // namespace

void ClassSignatureSpec::validate() const {
  if (classes.size() < 2) throw SpecError("need at least 2 classes");
  if (n_channels < 1 || n_points < 2) throw SpecError("need n_channels >= 1 and n_points >= 2");
  if (!(sample_rate > 0.0)) throw SpecError("sample_rate must be positive");
  if (!(rotation_hz > 0.0 && rotation_hz < sample_rate / 2.0)) {
    throw SpecError("rotation frequency must lie in (0, sample_rate/2)");
  }
  if (noise_std < 0.0 || speed_jitter < 0.0 || amplitude_jitter < 0.0) {
    throw SpecError("noise and jitter must be non-negative");
  }
  for (const auto& c : classes) {
    for (const auto& [mult, amp] : c.harmonics) {
      if (amp < 0.0 || mult <= 0.0) throw SpecError("class '" + c.name + "': bad harmonic");
      if (mult * rotation_hz >= sample_rate / 2.0) {
        throw SpecError("class '" + c.name + "': harmonic above Nyquist");
      }
    }
    if (c.impulse_amplitude < 0.0 || c.impulse_rate_hz < 0.0) {
      throw SpecError("class '" + c.name + "': negative impulse parameters");
    }
    if (c.am_depth < 0.0 || c.am_depth > 1.0) throw SpecError("class '" + c.name + "': am_depth");
  }
  for (std::size_t i = 0; i < classes.size(); ++i) {
    for (std::size_t j = i + 1; j < classes.size(); ++j) {
      if (same_signature(classes[i], classes[j])) {
        throw SpecError("classes '" + classes[i].name + "' and '" + classes[j].name +
                        "' are indistinguishable");
      }
    }
  }
}

ClassSignatureSpec rig_signature_spec() {
  ClassSignatureSpec spec;
  spec.classes = rig_classes();
  return spec;
}

ClassSignatureSpec desk_signature_spec() {
  ClassSignatureSpec spec = rig_signature_spec();
  spec.n_channels = 2;
  spec.n_points = 2048;
  return spec;
}

LabeledDataset generate_synthetic(const ClassSignatureSpec& spec, std::size_t n_per_class,
                                  std::uint64_t seed) {
  spec.validate();
  if (n_per_class < 1) throw SpecError("n_per_class must be >= 1");

  LabeledDataset ds;
  ds.provenance = Provenance::synthetic;
  for (const auto& c : spec.classes) ds.class_names.push_back(c.name);
  ds.samples.reserve(spec.classes.size() * n_per_class);

  const double dt = 1.0 / spec.sample_rate;
  std::vector<double> wave(spec.n_points);

  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& sig = spec.classes[c];
    for (std::size_t k = 0; k < n_per_class; ++k) {
      Rng rng(Rng::mix(Rng::mix(seed, c), k));
      SignalSample s;
      char id[64];
      std::snprintf(id, sizeof id, "%s-%05zu", sig.name.c_str(), k);
      s.id = id;
      s.label = static_cast<int>(c);
      s.provenance = Provenance::synthetic;
      s.n_channels = spec.n_channels;
      s.n_points = spec.n_points;
      s.sample_rate = spec.sample_rate;
      s.data.resize(spec.n_channels * spec.n_points);

      const double f_rot = spec.rotation_hz * (1.0 + spec.speed_jitter * (2.0 * rng.uniform() - 1.0));
      const double gain = 1.0 + spec.amplitude_jitter * (2.0 * rng.uniform() - 1.0);
      const double phase0 = kTwoPi * rng.uniform();
      const double am_phase = kTwoPi * rng.uniform();
      const double impulse_offset = rng.uniform();

      for (std::size_t ch = 0; ch < spec.n_channels; ++ch) {
        // Sensors sit at different angles around the rotor.
        const double ch_phase = kTwoPi * static_cast<double>(ch) / static_cast<double>(spec.n_channels);
        const double ch_gain = 1.0 / (1.0 + 0.15 * static_cast<double>(ch));
        for (std::size_t n = 0; n < spec.n_points; ++n) {
          const double t = static_cast<double>(n) * dt;
          double v = 0.0;
          for (const auto& [mult, amp] : sig.harmonics) {
            v += amp * std::sin(kTwoPi * mult * f_rot * t + mult * (phase0 + ch_phase));
          }
          v *= 1.0 + sig.am_depth * std::cos(kTwoPi * f_rot * t + am_phase);
          wave[n] = v;
        }
        if (sig.impulse_amplitude > 0.0 && sig.impulse_rate_hz > 0.0) {
          const double period = 1.0 / sig.impulse_rate_hz;
          const double ring = 5.0 * spec.resonance_decay_s;
          for (double t0 = impulse_offset * period; t0 < static_cast<double>(spec.n_points) * dt; t0 += period) {
            const auto first = static_cast<std::size_t>(std::ceil(t0 / dt));
            for (std::size_t n = first; n < spec.n_points; ++n) {
              const double tau = static_cast<double>(n) * dt - t0;
              if (tau > ring) break;
              wave[n] += sig.impulse_amplitude * std::exp(-tau / spec.resonance_decay_s) *
                         std::sin(kTwoPi * spec.resonance_hz * tau + ch_phase);
            }
          }
        }
        auto out = s.channel(ch);
        for (std::size_t n = 0; n < spec.n_points; ++n) {
          out[n] = static_cast<float>(gain * ch_gain * wave[n] + spec.noise_std * rng.normal());
        }
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace dfd
