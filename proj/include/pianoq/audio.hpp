#pragma once

// Audio ingestion: RIFF/WAV decoding to normalized mono, band-limited
// resampling and fixed-length slicing.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pianoq/error.hpp"

namespace pianoq {

/// Working sample rate of the classification pipeline.
inline constexpr int kWorkingRateHz = 44100;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = kWorkingRateHz;
  std::string source_id;

  std::size_t size() const noexcept { return samples.size(); }
  double duration_s() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

struct SliceSet {
  std::vector<AudioClip> slices;
  double window_s = 0.2;
  double hop_s = 0.2;
  std::string parent_source_id;
};

namespace detail {

inline std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

/// Decodes an in-memory WAV file. Accepts 16/24-bit integer PCM and 32-bit
/// float, mono or stereo; stereo is averaged to mono.
inline AudioClip parse_wav(std::span<const std::uint8_t> bytes, std::string source_id = {}) {
  using namespace detail;
  if (bytes.size() < 12) throw Error(ErrorCode::CorruptHeader, "file shorter than RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, block_align = 0, bits = 0;
  std::uint32_t rate = 0;
  std::span<const std::uint8_t> data;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t chunk_size = read_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (chunk_size > bytes.size() - body) {
      throw Error(ErrorCode::CorruptHeader, "chunk extends past end of file");
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw Error(ErrorCode::CorruptHeader, "fmt chunk too small");
      const std::uint8_t* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      block_align = read_u16(f + 12);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (chunk_size < 40) throw Error(ErrorCode::CorruptHeader, "extensible fmt chunk too small");
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = bytes.subspan(body, chunk_size);
      have_data = true;
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }

  if (!have_fmt) throw Error(ErrorCode::CorruptHeader, "missing fmt chunk");
  if (!have_data) throw Error(ErrorCode::CorruptHeader, "missing data chunk");

  const bool is_int = format == kFormatPcm && (bits == 16 || bits == 24);
  const bool is_float = format == kFormatFloat && bits == 32;
  if (!is_int && !is_float) {
    throw Error(ErrorCode::UnsupportedFormat,
                "codec " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
  }
  if (channels != 1 && channels != 2) {
    throw Error(ErrorCode::UnsupportedFormat, std::to_string(channels) + " channels");
  }
  if (rate == 0) throw Error(ErrorCode::CorruptHeader, "zero sample rate");
  const std::size_t bytes_per_sample = bits / 8;
  if (block_align != bytes_per_sample * channels) {
    throw Error(ErrorCode::CorruptHeader, "block_align inconsistent with channels and bit depth");
  }
  if (data.size() % block_align != 0) {
    throw Error(ErrorCode::CorruptHeader, "data chunk is not a whole number of frames");
  }
  const std::size_t frames = data.size() / block_align;
  if (frames == 0) throw Error(ErrorCode::CorruptHeader, "data chunk holds no samples");

  auto decode = [&](const std::uint8_t* p) -> double {
    if (bits == 16) {
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    }
    if (bits == 24) {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    const float f = std::bit_cast<float>(read_u32(p));
    if (!std::isfinite(f)) throw Error(ErrorCode::UnsupportedFormat, "non-finite float sample");
    return std::clamp(static_cast<double>(f), -1.0, 1.0);
  };

  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(rate);
  clip.source_id = std::move(source_id);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const std::uint8_t* frame = data.data() + i * block_align;
    if (channels == 1) {
      clip.samples[i] = decode(frame);
    } else {
      clip.samples[i] = 0.5 * (decode(frame) + decode(frame + bytes_per_sample));
    }
  }
  return clip;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Loads a WAV file; the clip's source_id defaults to the file stem.
inline AudioClip load_wav(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::FileNotFound, path.string());
  const auto bytes = read_file_bytes(path);
  return parse_wav(bytes, path.stem().string());
}

enum class WavEncoding { Pcm16, Float32 };

/// Encodes a mono clip. Pcm16 uses the same 1/32768 scale the decoder
/// applies, clamping +1.0 to 32767.
inline std::vector<std::uint8_t> encode_wav(const AudioClip& clip, WavEncoding enc = WavEncoding::Float32) {
  using namespace detail;
  const std::uint16_t bits = enc == WavEncoding::Pcm16 ? 16 : 32;
  const std::uint16_t block = bits / 8;
  const std::uint32_t data_size = static_cast<std::uint32_t>(clip.samples.size() * block);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, enc == WavEncoding::Pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * block);
  put_u16(out, block);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_size);
  for (double s : clip.samples) {
    if (enc == WavEncoding::Pcm16) {
      const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0))));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(s)));
    }
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip,
                      WavEncoding enc = WavEncoding::Float32) {
  const auto bytes = encode_wav(clip, enc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Kaiser-windowed sinc resampler parameters.
struct ResampleOptions {
  int zero_crossings = 32;  // taps per side, in units of the narrower band's period
  double kaiser_beta = 8.6;
};

/// Band-limited resampling. Output length is ceil(N * target / source), so
/// durations agree within one output sample period. Same-rate input is
/// returned unchanged.
inline AudioClip resample(const AudioClip& clip, int target_rate_hz, ResampleOptions opts = {}) {
  if (target_rate_hz <= 0) throw Error(ErrorCode::InvalidRate, "target rate must be positive");
  if (target_rate_hz == clip.sample_rate_hz) return clip;

  const double ratio = static_cast<double>(target_rate_hz) / clip.sample_rate_hz;
  const double cutoff = std::min(1.0, ratio);
  const double half_width = opts.zero_crossings / cutoff;
  const double i0_beta = std::cyl_bessel_i(0.0, opts.kaiser_beta);
  const auto n_in = static_cast<std::int64_t>(clip.samples.size());
  const auto n_out = (n_in * target_rate_hz + clip.sample_rate_hz - 1) / clip.sample_rate_hz;

  AudioClip out;
  out.sample_rate_hz = target_rate_hz;
  out.source_id = clip.source_id;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (std::int64_t m = 0; m < n_out; ++m) {
    const double t = static_cast<double>(m) / ratio;
    const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::int64_t>(n_in - 1, static_cast<std::int64_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::int64_t k = lo; k <= hi; ++k) {
      const double x = t - static_cast<double>(k);
      const double r = x / half_width;
      const double window = std::cyl_bessel_i(0.0, opts.kaiser_beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      const double arg = std::numbers::pi * cutoff * x;
      const double sinc = x == 0.0 ? 1.0 : std::sin(arg) / arg;
      acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * sinc * window;
    }
    out.samples[static_cast<std::size_t>(m)] = std::clamp(acc, -1.0, 1.0);
  }
  return out;
}

namespace detail {

/// Seconds to samples; snaps to the nearest integer when the product is
/// integral up to floating-point noise (0.2 s * 44100 Hz).
inline double seconds_to_samples(double seconds, int rate) {
  const double exact = seconds * rate;
  const double nearest = std::round(exact);
  return std::abs(exact - nearest) < 1e-6 ? nearest : exact;
}

}  // namespace detail

/// Cuts a clip into equal windows; slice i starts at round(i * hop * rate).
/// The trailing remainder shorter than a window is dropped.
inline SliceSet slice(const AudioClip& clip, double window_s = 0.2, double hop_s = 0.2) {
  if (!(window_s > 0.0) || !(hop_s > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "window and hop must be positive");
  }
  SliceSet set;
  set.window_s = window_s;
  set.hop_s = hop_s;
  set.parent_source_id = clip.source_id;

  const auto window = static_cast<std::size_t>(std::llround(detail::seconds_to_samples(window_s, clip.sample_rate_hz)));
  const double hop = detail::seconds_to_samples(hop_s, clip.sample_rate_hz);
  const std::size_t n = clip.samples.size();
  if (window == 0 || n < window) return set;

  auto count = static_cast<std::size_t>(std::floor(static_cast<double>(n - window) / hop)) + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const auto start = static_cast<std::size_t>(std::llround(static_cast<double>(i) * hop));
    if (start + window > n) break;
    AudioClip part;
    part.sample_rate_hz = clip.sample_rate_hz;
    part.source_id = clip.source_id;
    part.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(start),
                        clip.samples.begin() + static_cast<std::ptrdiff_t>(start + window));
    set.slices.push_back(std::move(part));
  }
  return set;
}

}  // namespace pianoq
