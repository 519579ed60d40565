#pragma once

// STFT power spectrograms and max-referenced, dB-normalized mel spectrograms.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "pianoq/audio.hpp"
#include "pianoq/error.hpp"

namespace pianoq {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kFftSize = 1024;
inline constexpr int kHopSize = 256;
inline constexpr int kMelBands = 128;
inline constexpr int kModelFrames = 35;
inline constexpr double kDbFloor = -80.0;

struct Spectrogram {
  RowMatrix power;  // frames x (fft_size / 2 + 1)
  int fft_size = kFftSize;
  int hop = kHopSize;
  int sample_rate_hz = kWorkingRateHz;

  Eigen::Index frames() const { return power.rows(); }
  Eigen::Index bins() const { return power.cols(); }
};

struct MelSpectrogram {
  RowMatrix values;  // frames x n_mels, in [0, 1]
  int n_mels = kMelBands;
  double fmin_hz = 0.0;
  double fmax_hz = kWorkingRateHz / 2.0;
};

/// Fixed-shape classifier image, n_mels rows by kModelFrames columns.
struct ModelInput {
  RowMatrix image = RowMatrix::Zero(kMelBands, kModelFrames);
};

/// Periodic Hann window (the DFT-even variant used for spectral analysis).
inline std::vector<double> hann_window(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  }
  return w;
}

/// One-sided power spectrum |X_k|^2, k = 0..n/2, of a real frame.
inline void power_spectrum(Eigen::FFT<double>& fft, const std::vector<double>& frame,
                           std::vector<std::complex<double>>& scratch, double* out) {
  fft.fwd(scratch, frame);
  const std::size_t bins = frame.size() / 2 + 1;
  for (std::size_t k = 0; k < bins; ++k) out[k] = std::norm(scratch[k]);
}

/// Centered STFT with reflect padding: frame t covers samples
/// [t*hop - fft_size/2, t*hop + fft_size/2).
inline Spectrogram stft(const AudioClip& clip, int fft_size = kFftSize, int hop = kHopSize) {
  if (fft_size <= 0 || hop <= 0 || (fft_size & (fft_size - 1)) != 0) {
    throw Error(ErrorCode::InvalidArgument, "fft_size must be a positive power of two and hop positive");
  }
  const auto n = static_cast<std::int64_t>(clip.samples.size());
  if (n < fft_size) {
    throw Error(ErrorCode::WindowOverflow, "clip has " + std::to_string(n) +
                                               " samples, fewer than fft_size " + std::to_string(fft_size));
  }
  const std::int64_t pad = fft_size / 2;
  const std::int64_t frames = 1 + n / hop;
  const int bins = fft_size / 2 + 1;

  auto padded_at = [&](std::int64_t i) {
    // numpy-style reflect (edge sample not repeated)
    std::int64_t j = i - pad;
    if (j < 0) j = -j;
    if (j >= n) j = 2 * (n - 1) - j;
    return clip.samples[static_cast<std::size_t>(j)];
  };

  const auto window = hann_window(fft_size);
  Spectrogram spec;
  spec.fft_size = fft_size;
  spec.hop = hop;
  spec.sample_rate_hz = clip.sample_rate_hz;
  spec.power.resize(frames, bins);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<std::size_t>(fft_size));
  std::vector<std::complex<double>> scratch;
  for (std::int64_t t = 0; t < frames; ++t) {
    for (int i = 0; i < fft_size; ++i) {
      frame[static_cast<std::size_t>(i)] = padded_at(t * hop + i) * window[static_cast<std::size_t>(i)];
    }
    power_spectrum(fft, frame, scratch, spec.power.row(t).data());
  }
  return spec;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Center frequencies (Hz) of the n_mels filters: interior points of a
/// uniform mel grid with n_mels + 2 nodes over [fmin, fmax].
inline std::vector<double> mel_center_frequencies(int n_mels, double fmin, double fmax) {
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  std::vector<double> centers(static_cast<std::size_t>(n_mels));
  for (int i = 0; i < n_mels; ++i) {
    centers[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * (i + 1) / (n_mels + 1));
  }
  return centers;
}

/// Triangular mel filters over FFT bins (n_mels x fft_size/2+1), peak weight 1.
/// Each triangle's half-widths are at least one bin spacing, so filters that
/// are narrower than the FFT resolution still capture their nearest bin.
inline RowMatrix mel_filterbank(int sample_rate_hz, int fft_size, int n_mels = kMelBands, double fmin = 0.0,
                                double fmax = -1.0) {
  if (fmax < 0.0) fmax = sample_rate_hz / 2.0;
  if (n_mels < 1 || !(fmin >= 0.0) || !(fmin < fmax) || fmax > sample_rate_hz / 2.0 || fft_size < 2) {
    throw Error(ErrorCode::InvalidRange, "mel filterbank requires 0 <= fmin < fmax <= sr/2 and n_mels >= 1");
  }
  const double lo = hz_to_mel(fmin), hi = hz_to_mel(fmax);
  std::vector<double> nodes(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i) nodes[static_cast<std::size_t>(i)] = mel_to_hz(lo + (hi - lo) * i / (n_mels + 1));

  const int bins = fft_size / 2 + 1;
  const double df = static_cast<double>(sample_rate_hz) / fft_size;
  RowMatrix fb = RowMatrix::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double center = nodes[static_cast<std::size_t>(m) + 1];
    const double left = std::min(nodes[static_cast<std::size_t>(m)], center - df);
    const double right = std::max(nodes[static_cast<std::size_t>(m) + 2], center + df);
    for (int k = 0; k < bins; ++k) {
      const double f = k * df;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb(m, k) = w;
    }
  }
  return fb;
}

/// Max-referenced dB mapping onto [0, 1]: the maximum cell maps to 1 and
/// anything at or below the -80 dB floor maps to 0. All-zero input stays zero.
inline RowMatrix normalize_db(const RowMatrix& power) {
  RowMatrix out = RowMatrix::Zero(power.rows(), power.cols());
  const double ref = power.size() ? power.maxCoeff() : 0.0;
  if (!(ref > 0.0)) return out;
  const double min_ratio = std::pow(10.0, kDbFloor / 10.0);
  for (Eigen::Index i = 0; i < power.size(); ++i) {
    const double ratio = std::max(power.data()[i] / ref, min_ratio);
    const double db = 10.0 * std::log10(ratio);
    out.data()[i] = std::clamp((db - kDbFloor) / -kDbFloor, 0.0, 1.0);
  }
  return out;
}

inline MelSpectrogram mel_spectrogram(const AudioClip& clip, int n_mels = kMelBands, int fft_size = kFftSize,
                                      int hop = kHopSize) {
  const Spectrogram spec = stft(clip, fft_size, hop);
  const RowMatrix fb = mel_filterbank(clip.sample_rate_hz, fft_size, n_mels);
  MelSpectrogram mel;
  mel.n_mels = n_mels;
  mel.fmin_hz = 0.0;
  mel.fmax_hz = clip.sample_rate_hz / 2.0;
  mel.values = normalize_db(spec.power * fb.transpose());
  return mel;
}

/// Transposes to bands x frames and center-crops or zero-pads the frame axis
/// to kModelFrames (left pad = floor(deficit / 2)).
inline ModelInput to_model_input(const MelSpectrogram& mel) {
  if (mel.values.cols() != kMelBands) {
    throw Error(ErrorCode::BandMismatch, "expected " + std::to_string(kMelBands) + " mel bands, got " +
                                             std::to_string(mel.values.cols()));
  }
  ModelInput input;
  const auto frames = static_cast<int>(mel.values.rows());
  if (frames >= kModelFrames) {
    const int start = (frames - kModelFrames) / 2;
    input.image = mel.values.middleRows(start, kModelFrames).transpose();
  } else {
    const int left = (kModelFrames - frames) / 2;
    input.image.middleCols(left, frames) = mel.values.transpose();
  }
  return input;
}

/// Frames x bands CSV with a header row.
inline void write_mel_csv(std::ostream& out, const MelSpectrogram& mel) {
  out << "frame";
  for (int b = 0; b < mel.values.cols(); ++b) out << ",mel_" << b;
  out << '\n';
  out.precision(10);
  for (Eigen::Index t = 0; t < mel.values.rows(); ++t) {
    out << t;
    for (Eigen::Index b = 0; b < mel.values.cols(); ++b) out << ',' << mel.values(t, b);
    out << '\n';
  }
}

/// Binary 8-bit PGM: one row per mel band (highest band on top), one column per frame.
inline void write_mel_pgm(std::ostream& out, const MelSpectrogram& mel) {
  const auto width = mel.values.rows(), height = mel.values.cols();
  out << "P5\n" << width << ' ' << height << "\n255\n";
  for (Eigen::Index b = height - 1; b >= 0; --b) {
    for (Eigen::Index t = 0; t < width; ++t) {
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(mel.values(t, b) * 255.0))));
    }
  }
}

}  // namespace pianoq
