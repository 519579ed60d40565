#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "pianoq/erb.hpp"
#include "pianoq/scoring.hpp"
#include "support.hpp"

using namespace pianoq;
namespace ts = testing_support;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Internal;
}

// Sum of partials k*f0 with amplitude (f / 100 Hz)^-1.5: energy per band
// falls as frequency rises, so higher notes carry less total ERB power.
AudioClip falling_envelope_note(double f0, double seconds = 1.2) {
  AudioClip clip;
  clip.sample_rate_hz = 44100;
  const auto n = static_cast<std::size_t>(seconds * 44100);
  clip.samples.assign(n, 0.0);
  for (int k = 1; k * f0 < 16000.0; ++k) {
    const double f = k * f0;
    const double amp = 0.05 * std::pow(f / 100.0, -1.5);
    for (std::size_t i = 0; i < n; ++i) clip.samples[i] += amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / 44100.0);
  }
  for (double& s : clip.samples) s = std::clamp(s, -1.0, 1.0);
  return clip;
}

}  // namespace

TEST(ErbFormulas, Moore83) {
  EXPECT_DOUBLE_EQ(erb::erb_moore83(0.0), 28.52);
  EXPECT_NEAR(erb::erb_moore83(1.0), 128.14, 1e-9);
  double prev = erb::erb_moore83(0.0);
  for (double f = 0.05; f <= 20.0; f += 0.05) {
    const double v = erb::erb_moore83(f);
    EXPECT_GT(v, prev);
    prev = v;
  }
  EXPECT_EQ(code_of([] { erb::erb_moore83(-0.1); }), ErrorCode::DomainError);
}

TEST(ErbFormulas, Glasberg90) {
  EXPECT_DOUBLE_EQ(erb::erb_glasberg90(0.0), 24.7);
  EXPECT_NEAR(erb::erb_glasberg90(1.0), 132.639, 1e-9);
  EXPECT_NEAR(erb::erb_glasberg90(16.0), 1751.724, 1e-9);
  EXPECT_EQ(code_of([] { erb::erb_glasberg90(-1.0); }), ErrorCode::DomainError);
}

TEST(ErbFormulas, TwoApproximationsAgree) {
  for (double f : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double a = erb::erb_moore83(f), b = erb::erb_glasberg90(f);
    EXPECT_LE(std::abs(a - b) / b, 0.15) << f;
  }
}

TEST(ErbFormulas, ErbRate) {
  EXPECT_EQ(erb::erb_rate(0.0), 0.0);
  EXPECT_NEAR(erb::erb_rate(1000.0), 15.621, 5e-4);
  for (double f : {100.0, 1000.0, 8000.0}) {
    EXPECT_NEAR(erb::inverse_erb_rate(erb::erb_rate(f)), f, 1e-9 * f);
  }
  EXPECT_EQ(code_of([] { erb::erb_rate(-1.0); }), ErrorCode::DomainError);
  EXPECT_EQ(code_of([] { erb::inverse_erb_rate(-1.0); }), ErrorCode::DomainError);
}

TEST(ErbFilterbank, Layout) {
  const erb::Filterbank bank = erb::build_filterbank(44100);
  ASSERT_EQ(bank.size(), 77u);
  EXPECT_EQ(bank.frame_samples, 256);
  EXPECT_NEAR(bank.center_freqs_hz.back(), 16000.0, 16000.0 * 1e-6);
  EXPECT_NEAR(bank.center_freqs_hz.front(), 26.0, 1e-9);
  EXPECT_GT(bank.center_freqs_hz.front(), 0.0);
  for (std::size_t i = 0; i < bank.size(); ++i) {
    EXPECT_DOUBLE_EQ(bank.bandwidths_hz[i], erb::erb_glasberg90(bank.center_freqs_hz[i] / 1000.0));
    if (i > 0) EXPECT_GT(bank.center_freqs_hz[i], bank.center_freqs_hz[i - 1]);
    if (i > 1) {
      EXPECT_GT(bank.center_freqs_hz[i] - bank.center_freqs_hz[i - 1],
                bank.center_freqs_hz[i - 1] - bank.center_freqs_hz[i - 2]);
    }
  }
  const double step = erb::erb_rate(bank.center_freqs_hz[1]) - erb::erb_rate(bank.center_freqs_hz[0]);
  for (std::size_t i = 1; i < bank.size(); ++i) {
    EXPECT_NEAR(erb::erb_rate(bank.center_freqs_hz[i]) - erb::erb_rate(bank.center_freqs_hz[i - 1]), step, 1e-9);
  }
}

TEST(ErbFilterbank, InvalidRate) {
  EXPECT_EQ(code_of([] { erb::build_filterbank(22050); }), ErrorCode::InvalidRate);
  EXPECT_NO_THROW(erb::build_filterbank(32000));
}

TEST(ErbRepresentation, ZeroClip) {
  const auto bank = erb::build_filterbank(44100);
  AudioClip clip;
  clip.samples.assign(44100, 0.0);
  const auto rep = erb::representation(clip, bank, erb::DurationMode::Full);
  EXPECT_EQ(rep.band_power.cols(), 77);
  EXPECT_EQ(rep.band_power.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rep.time_mean.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ErbRepresentation, WhiteNoiseFollowsBandwidth) {
  const auto bank = erb::build_filterbank(44100);
  const double sigma = 0.1;
  const AudioClip noise = ts::white_noise(256 * 4000, 44100, 2024, sigma);
  const auto rep = erb::representation(noise, bank, erb::DurationMode::Full);
  ASSERT_EQ(rep.band_power.rows(), 4000);
  // E|X_k|^2 = sigma^2 * sum(w^2) for every bin; a band spans bandwidth / df bins
  const auto window = hann_window(256);
  double w2 = 0.0;
  for (double w : window) w2 += w * w;
  const double df = 44100.0 / 256.0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double expected = sigma * sigma * w2 * bank.bandwidths_hz[i] / df;
    EXPECT_NEAR(rep.time_mean[static_cast<Eigen::Index>(i)] / expected, 1.0, 0.10) << "channel " << i;
  }
}

TEST(ErbRepresentation, SineSelectsItsChannel) {
  const auto bank = erb::build_filterbank(44100);
  for (int j : {60, 66, 70, 76}) {
    const auto rep = erb::representation(ts::sine(bank.center_freqs_hz[static_cast<std::size_t>(j)], 44100, 1.0),
                                         bank, erb::DurationMode::Full);
    Eigen::Index arg = 0;
    rep.time_mean.maxCoeff(&arg);
    EXPECT_EQ(arg, j);
  }
}

TEST(ErbRepresentation, FrameCountsPerDuration) {
  const auto bank = erb::build_filterbank(44100);
  const AudioClip clip = ts::white_noise(70000, 44100, 5);
  EXPECT_EQ(erb::representation(clip, bank, erb::DurationMode::OneSecond).band_power.rows(), 44100 / 256);
  EXPECT_EQ(erb::representation(clip, bank, erb::DurationMode::OnePointTwoSeconds).band_power.rows(), 52920 / 256);
  EXPECT_EQ(erb::representation(clip, bank, erb::DurationMode::Full).band_power.rows(), 70000 / 256);
}

TEST(ErbRepresentation, ShortClipIsZeroPadded) {
  const auto bank = erb::build_filterbank(44100);
  const AudioClip clip = ts::white_noise(44100 / 2, 44100, 6);
  const auto rep = erb::representation(clip, bank, erb::DurationMode::OnePointTwoSeconds);
  ASSERT_EQ(rep.band_power.rows(), 206);
  // frames entirely past the clip end hold no power
  for (Eigen::Index t = 22050 / 256 + 1; t < rep.band_power.rows(); ++t) {
    EXPECT_EQ(rep.band_power.row(t).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(ErbRepresentation, PowerScalesQuadratically) {
  const auto bank = erb::build_filterbank(44100);
  const AudioClip clip = ts::white_noise(20000, 44100, 7, 0.05);
  const auto ref = erb::representation(clip, bank, erb::DurationMode::Full);
  for (double c : {0.1, 3.0, 7.5}) {
    AudioClip scaled = clip;
    for (double& s : scaled.samples) s *= c;
    const auto rep = erb::representation(scaled, bank, erb::DurationMode::Full);
    for (Eigen::Index i = 0; i < rep.band_power.size(); ++i) {
      const double want = c * c * ref.band_power.data()[i];
      EXPECT_NEAR(rep.band_power.data()[i], want, 1e-9 * std::abs(want) + 1e-300);
    }
  }
}

TEST(ErbRepresentation, TimeMeanIsColumnMean) {
  const auto bank = erb::build_filterbank(44100);
  const auto rep = erb::representation(ts::white_noise(30000, 44100, 8), bank, erb::DurationMode::Full);
  EXPECT_GE(rep.band_power.minCoeff(), 0.0);
  for (Eigen::Index c = 0; c < rep.band_power.cols(); ++c) {
    double sum = 0.0;
    for (Eigen::Index t = 0; t < rep.band_power.rows(); ++t) sum += rep.band_power(t, c);
    const double mean = sum / static_cast<double>(rep.band_power.rows());
    EXPECT_NEAR(rep.time_mean[c], mean, 1e-12 * std::abs(mean));
  }
}

TEST(ErbRepresentation, Errors) {
  const auto bank = erb::build_filterbank(44100);
  AudioClip empty;
  EXPECT_EQ(code_of([&] { erb::representation(empty, bank, erb::DurationMode::Full); }), ErrorCode::EmptyInput);
  AudioClip other = ts::white_noise(1000, 48000, 1);
  EXPECT_EQ(code_of([&] { erb::representation(other, bank, erb::DurationMode::Full); }), ErrorCode::InvalidRate);
  EXPECT_EQ(code_of([] { erb::parse_duration_mode("2.0"); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(erb::parse_duration_mode("1.0"), erb::DurationMode::OneSecond);
  EXPECT_EQ(erb::parse_duration_mode("1.2"), erb::DurationMode::OnePointTwoSeconds);
  EXPECT_EQ(erb::parse_duration_mode("full"), erb::DurationMode::Full);
}

TEST(BrandSummary, MeansOverPitches) {
  erb::Representation a, b;
  a.time_mean = Eigen::VectorXd::LinSpaced(77, 1.0, 77.0);
  b.time_mean = Eigen::VectorXd::Constant(77, 3.0);
  const auto one = erb::summarize_brand({{40, a}}, "Steinway");
  EXPECT_TRUE(one.brand_average == a.time_mean);
  EXPECT_EQ(one.brand_label, "Steinway");

  const auto two = erb::summarize_brand({{40, a}, {52, b}}, "Kawai");
  for (Eigen::Index i = 0; i < 77; ++i) EXPECT_DOUBLE_EQ(two.brand_average[i], (a.time_mean[i] + b.time_mean[i]) / 2.0);
  EXPECT_EQ(two.mean_erb_by_pitch.size(), 2u);
  EXPECT_EQ(code_of([] { erb::summarize_brand({}, "x"); }), ErrorCode::EmptyInput);
}

TEST(BrandSummary, CurveFallsWithPitch) {
  const auto bank = erb::build_filterbank(44100);
  std::map<int, erb::Representation> reps;
  // sparse pitches, as for a piano missing its black keys
  for (int pitch = 0; pitch < 88; pitch += 7) {
    const double f0 = 27.5 * std::pow(2.0, pitch / 12.0);
    reps[pitch] = erb::representation(falling_envelope_note(f0), bank, erb::DurationMode::OnePointTwoSeconds);
  }
  const auto summary = erb::summarize_brand(reps, "Synthetic");
  std::vector<double> pitch, value;
  for (const auto& [p, v] : summary.pitch_curve()) {
    pitch.push_back(p);
    value.push_back(std::log(v));
  }
  for (std::size_t i = 1; i < value.size(); ++i) EXPECT_LT(value[i], value[i - 1]) << "pitch " << pitch[i];
  EXPECT_LT(pearson_corr(pitch, value), -0.9);
}
