#pragma once

// Synthetic piano-like corpus: damped, slightly inharmonic partial series
// with a per-brand inharmonicity coefficient and spectral tilt, plus white
// noise at a fixed SNR. Stands in for recorded notes in tests and demos.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "pianoq/audio.hpp"
#include "pianoq/labels.hpp"

namespace pianoq::synth {

struct BrandTimbre {
  double inharmonicity;  // B in f_k = k f0 sqrt(1 + B k^2)
  double tilt;           // partial amplitude ~ k^-tilt
};

/// Default timbres, one per canonical brand. Tilt and inharmonicity are
/// deliberately not ordered the same way.
inline constexpr std::array<BrandTimbre, kNumBrands> kDefaultTimbres = {{
    {3.0e-4, 0.0},
    {3.0e-3, 2.0},
    {1.0e-5, 1.0},
    {1.0e-2, 3.0},
    {1.0e-4, 2.5},
    {1.0e-3, 0.5},
    {3.0e-5, 1.5},
}};

struct NoteOptions {
  double duration_s = 1.0;
  int sample_rate_hz = kWorkingRateHz;
  double snr_db = 30.0;
  double decay_s = 2.0;  // amplitude time constant of the fundamental at A0
  double peak = 0.5;
  double max_partial_hz = 18000.0;
};

/// Fundamental of piano key `key` (0 = A0 at 27.5 Hz, 87 = C8).
inline double key_frequency(int key) { return 27.5 * std::pow(2.0, key / 12.0); }

inline AudioClip note(const BrandTimbre& timbre, int key, std::uint64_t seed, const NoteOptions& opts = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const auto n = static_cast<std::size_t>(std::llround(opts.duration_s * opts.sample_rate_hz));
  const double f0 = key_frequency(key);
  const double nyquist_guard = std::min(opts.max_partial_hz, 0.45 * opts.sample_rate_hz);
  // higher notes ring for a shorter time
  const double decay = opts.decay_s * std::pow(2.0, -key / 48.0);

  std::vector<double> signal(n, 0.0);
  for (int k = 1; k <= 200; ++k) {
    const double fk = k * f0 * std::sqrt(1.0 + timbre.inharmonicity * k * k);
    if (fk >= nyquist_guard) break;
    const double amp = std::pow(static_cast<double>(k), -timbre.tilt);
    const double ph = phase(rng);
    const double tau = decay / (1.0 + 0.05 * k);
    const double w = 2.0 * std::numbers::pi * fk / opts.sample_rate_hz;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / opts.sample_rate_hz;
      signal[i] += amp * std::exp(-t / tau) * std::sin(w * static_cast<double>(i) + ph);
    }
  }
  const auto attack = static_cast<std::size_t>(0.005 * opts.sample_rate_hz);
  for (std::size_t i = 0; i < std::min(attack, n); ++i) signal[i] *= static_cast<double>(i) / attack;

  double peak = 0.0, power = 0.0;
  for (double s : signal) {
    peak = std::max(peak, std::abs(s));
    power += s * s;
  }
  const double gain = peak > 0.0 ? opts.peak / peak : 0.0;
  power = power * gain * gain / static_cast<double>(std::max<std::size_t>(n, 1));
  std::normal_distribution<double> noise(0.0, std::sqrt(power / std::pow(10.0, opts.snr_db / 10.0)));

  AudioClip clip;
  clip.sample_rate_hz = opts.sample_rate_hz;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = std::clamp(signal[i] * gain + noise(rng), -1.0, 1.0);
  return clip;
}

struct CorpusNote {
  AudioClip clip;
  std::size_t brand = 0;
  int key = 0;
};

/// 88 notes for each of the seven brands. Source ids are "<brand>_<key>".
inline std::vector<CorpusNote> corpus(std::uint64_t seed, const NoteOptions& opts = {}, int keys = 88) {
  std::vector<CorpusNote> out;
  out.reserve(kNumBrands * static_cast<std::size_t>(keys));
  for (std::size_t b = 0; b < kNumBrands; ++b) {
    for (int key = 0; key < keys; ++key) {
      const std::uint64_t note_seed = seed * 1000003ULL + b * 1009ULL + static_cast<std::uint64_t>(key);
      CorpusNote cn{note(kDefaultTimbres[b], key, note_seed, opts), b, key};
      cn.clip.source_id = std::string(kBrandLabels[b]) + "_" + std::to_string(key);
      out.push_back(std::move(cn));
    }
  }
  return out;
}

}  // namespace pianoq::synth
