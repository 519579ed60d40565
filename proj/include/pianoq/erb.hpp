#pragma once

// Equivalent-rectangular-bandwidth analysis: the two published ERB
// approximations, a 77-channel filterbank uniformly spaced on the ERB-rate
// scale up to 16 kHz, and per-brand aggregation of the band-power profiles.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "pianoq/audio.hpp"
#include "pianoq/error.hpp"
#include "pianoq/spectral.hpp"

namespace pianoq::erb {

inline constexpr int kChannels = 77;
inline constexpr int kFrameSamples = 256;
inline constexpr double kLowestCenterHz = 26.0;
inline constexpr double kHighestCenterHz = 16000.0;

/// Moore & Glasberg (1983) polynomial, f in kHz, result in Hz.
inline double erb_moore83(double f_khz) {
  if (!(f_khz >= 0.0)) throw Error(ErrorCode::DomainError, "frequency must be non-negative");
  return 6.23 * f_khz * f_khz + 93.39 * f_khz + 28.52;
}

/// Glasberg & Moore (1990) linear form, f in kHz, result in Hz.
inline double erb_glasberg90(double f_khz) {
  if (!(f_khz >= 0.0)) throw Error(ErrorCode::DomainError, "frequency must be non-negative");
  return 24.7 * (4.37 * f_khz + 1.0);
}

/// ERB-rate (Cam) of a frequency in Hz.
inline double erb_rate(double f_hz) {
  if (!(f_hz >= 0.0)) throw Error(ErrorCode::DomainError, "frequency must be non-negative");
  return 21.4 * std::log10(4.37 * f_hz / 1000.0 + 1.0);
}

inline double inverse_erb_rate(double rate) {
  if (!(rate >= 0.0)) throw Error(ErrorCode::DomainError, "ERB rate must be non-negative");
  return (std::pow(10.0, rate / 21.4) - 1.0) * 1000.0 / 4.37;
}

struct Filterbank {
  std::vector<double> center_freqs_hz;
  std::vector<double> bandwidths_hz;
  int frame_samples = kFrameSamples;
  int sample_rate_hz = kWorkingRateHz;

  std::size_t size() const noexcept { return center_freqs_hz.size(); }
};

inline Filterbank build_filterbank(int sample_rate_hz) {
  if (sample_rate_hz < 32000) {
    throw Error(ErrorCode::InvalidRate, "ERB filterbank needs a sample rate of at least 32000 Hz");
  }
  Filterbank bank;
  bank.sample_rate_hz = sample_rate_hz;
  bank.center_freqs_hz.resize(kChannels);
  bank.bandwidths_hz.resize(kChannels);
  const double lo = erb_rate(kLowestCenterHz), hi = erb_rate(kHighestCenterHz);
  for (int i = 0; i < kChannels; ++i) {
    const double rate = lo + (hi - lo) * i / (kChannels - 1);
    const double fc = i == kChannels - 1 ? kHighestCenterHz : inverse_erb_rate(rate);
    bank.center_freqs_hz[static_cast<std::size_t>(i)] = fc;
    bank.bandwidths_hz[static_cast<std::size_t>(i)] = erb_glasberg90(fc / 1000.0);
  }
  return bank;
}

enum class DurationMode { OneSecond, OnePointTwoSeconds, Full };

inline std::string to_string(DurationMode mode) {
  switch (mode) {
    case DurationMode::OneSecond: return "1.0";
    case DurationMode::OnePointTwoSeconds: return "1.2";
    case DurationMode::Full: return "full";
  }
  return "full";
}

inline DurationMode parse_duration_mode(const std::string& text) {
  if (text == "1.0" || text == "1") return DurationMode::OneSecond;
  if (text == "1.2") return DurationMode::OnePointTwoSeconds;
  if (text == "full") return DurationMode::Full;
  throw Error(ErrorCode::InvalidArgument, "duration must be 1.0, 1.2 or full, got '" + text + "'");
}

struct Representation {
  RowMatrix band_power;  // frames x kChannels
  Eigen::VectorXd time_mean;
  DurationMode duration_mode = DurationMode::Full;
};

/// Truncates or zero-pads to the duration mode and returns the sample count.
inline std::vector<double> standardize_duration(const AudioClip& clip, DurationMode mode) {
  std::vector<double> samples = clip.samples;
  if (mode == DurationMode::Full) return samples;
  const double seconds = mode == DurationMode::OneSecond ? 1.0 : 1.2;
  const auto target = static_cast<std::size_t>(std::llround(seconds * clip.sample_rate_hz));
  samples.resize(target, 0.0);
  return samples;
}

/// Per-frame power in each ERB band. Each 256-sample frame is Hann windowed
/// and transformed; the one-sided power spectrum is treated as a
/// piecewise-constant density (bin k spans [(k-1/2)df, (k+1/2)df]) and
/// integrated exactly over each rectangular band [fc - ERB/2, fc + ERB/2].
inline Representation representation(const AudioClip& clip, const Filterbank& bank, DurationMode mode) {
  if (clip.samples.empty()) throw Error(ErrorCode::EmptyInput, "clip has no samples");
  if (clip.sample_rate_hz != bank.sample_rate_hz) {
    throw Error(ErrorCode::InvalidRate, "clip rate " + std::to_string(clip.sample_rate_hz) +
                                            " differs from filterbank rate " + std::to_string(bank.sample_rate_hz));
  }
  const std::vector<double> samples = standardize_duration(clip, mode);
  const int frame_len = bank.frame_samples;
  const auto frames = static_cast<Eigen::Index>(samples.size() / static_cast<std::size_t>(frame_len));
  const int bins = frame_len / 2 + 1;
  const double df = static_cast<double>(bank.sample_rate_hz) / frame_len;

  // Band integration weights: overlap of each band with each bin's interval, in bins.
  const auto channels = static_cast<Eigen::Index>(bank.size());
  RowMatrix weights = RowMatrix::Zero(bins, channels);
  for (Eigen::Index c = 0; c < channels; ++c) {
    const double lo = bank.center_freqs_hz[static_cast<std::size_t>(c)] - bank.bandwidths_hz[static_cast<std::size_t>(c)] / 2.0;
    const double hi = bank.center_freqs_hz[static_cast<std::size_t>(c)] + bank.bandwidths_hz[static_cast<std::size_t>(c)] / 2.0;
    for (int k = 0; k < bins; ++k) {
      const double overlap = std::min(hi, (k + 0.5) * df) - std::max(lo, (k - 0.5) * df);
      if (overlap > 0.0) weights(k, c) = overlap / df;
    }
  }

  RowMatrix spectra(frames, bins);
  const auto window = hann_window(frame_len);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<std::size_t>(frame_len));
  std::vector<std::complex<double>> scratch;
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (int i = 0; i < frame_len; ++i) {
      frame[static_cast<std::size_t>(i)] =
          samples[static_cast<std::size_t>(t * frame_len + i)] * window[static_cast<std::size_t>(i)];
    }
    power_spectrum(fft, frame, scratch, spectra.row(t).data());
  }

  Representation rep;
  rep.duration_mode = mode;
  rep.band_power = spectra * weights;
  rep.time_mean = frames > 0 ? Eigen::VectorXd(rep.band_power.colwise().mean().transpose())
                             : Eigen::VectorXd::Zero(channels);
  return rep;
}

struct BrandSummary {
  std::string brand_label;
  std::map<int, Eigen::VectorXd> mean_erb_by_pitch;
  Eigen::VectorXd brand_average;

  /// Scalar curve over pitch: mean band power across channels for each pitch.
  std::map<int, double> pitch_curve() const {
    std::map<int, double> curve;
    for (const auto& [pitch, v] : mean_erb_by_pitch) curve[pitch] = v.mean();
    return curve;
  }
};

/// Pitches may be sparse (a piano recorded without its black keys).
inline BrandSummary summarize_brand(const std::map<int, Representation>& reps, std::string brand_label) {
  if (reps.empty()) throw Error(ErrorCode::EmptyInput, "no pitches for brand " + brand_label);
  BrandSummary summary;
  summary.brand_label = std::move(brand_label);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(reps.begin()->second.time_mean.size());
  for (const auto& [pitch, rep] : reps) {
    if (rep.time_mean.size() != sum.size()) throw Error(ErrorCode::ShapeMismatch, "channel count differs across pitches");
    summary.mean_erb_by_pitch[pitch] = rep.time_mean;
    sum += rep.time_mean;
  }
  summary.brand_average = sum / static_cast<double>(reps.size());
  return summary;
}

}  // namespace pianoq::erb
