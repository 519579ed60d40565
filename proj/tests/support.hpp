#pragma once

// Fixtures and independent oracles shared by the test binaries.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pianoq/audio.hpp"
#include "pianoq/checkpoint.hpp"
#include "pianoq/cnn.hpp"
#include "pianoq/labels.hpp"

namespace testing_support {

using pianoq::AudioClip;

inline AudioClip sine(double freq_hz, int rate, double seconds, double amplitude = 0.5, double phase = 0.0) {
  AudioClip clip;
  clip.sample_rate_hz = rate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate + phase);
  }
  return clip;
}

inline AudioClip sine_samples(double freq_hz, int rate, std::size_t n, double amplitude = 0.5) {
  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    clip.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / rate);
  }
  return clip;
}

inline AudioClip white_noise(std::size_t n, int rate, std::uint64_t seed, double sigma = 0.1) {
  AudioClip clip;
  clip.sample_rate_hz = rate;
  clip.samples.resize(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  for (double& s : clip.samples) s = std::clamp(dist(rng), -1.0, 1.0);
  return clip;
}

/// O(N^2) DFT power |X_k|^2 for k = 0..N/2.
inline std::vector<double> direct_dft_power(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = std::norm(acc);
  }
  return out;
}

inline std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix; eigenvalues descending.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a, int max_sweeps = 100) {
  const Eigen::Index n = a.rows();
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(eig.rbegin(), eig.rend());
  return eig;
}

/// Sample covariance (divisor N - 1) built with explicit loops.
inline Eigen::MatrixXd covariance_loops(const Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows(), d = x.cols();
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i) mean[static_cast<std::size_t>(j)] += x(i, j);
    mean[static_cast<std::size_t>(j)] /= static_cast<double>(n);
  }
  Eigen::MatrixXd c(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        s += (x(i, a) - mean[static_cast<std::size_t>(a)]) * (x(i, b) - mean[static_cast<std::size_t>(b)]);
      }
      c(a, b) = s / static_cast<double>(n - 1);
    }
  }
  return c;
}

/// Three 77-D Gaussian clusters of `per_cluster` points, centers 10 sigma apart.
inline Eigen::MatrixXd gaussian_clusters(int per_cluster, std::uint64_t seed, std::vector<std::string>& labels) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int dims = 77;
  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(3, dims);
  // mutually orthogonal directions, pairwise separation exactly 10 sigma
  const double offset = 10.0 / std::sqrt(2.0);
  for (int c = 0; c < 3; ++c) centers(c, c) = offset;
  Eigen::MatrixXd x(3 * per_cluster, dims);
  labels.clear();
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < per_cluster; ++i) {
      for (int d = 0; d < dims; ++d) x(c * per_cluster + i, d) = centers(c, d) + normal(rng);
      labels.push_back("cluster" + std::to_string(c));
    }
  }
  return x;
}

/// Mean fraction of each point's k nearest embedded neighbours sharing its label.
inline double knn_purity(const Eigen::MatrixX2d& y, const std::vector<std::string>& labels, int k) {
  const Eigen::Index n = y.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<std::pair<double, Eigen::Index>> d;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) d.push_back({(y.row(i) - y.row(j)).squaredNorm(), j});
    }
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    int same = 0;
    for (int m = 0; m < k; ++m) same += labels[static_cast<std::size_t>(d[static_cast<std::size_t>(m)].second)] == labels[static_cast<std::size_t>(i)];
    total += static_cast<double>(same) / k;
  }
  return total / static_cast<double>(n);
}

/// Max relative error between analytic gradients and central differences
/// over the listed parameter indices (all of them when `indices` is empty).
/// A stencil that changes the ReLU/max-pool pattern straddles a kink, where
/// central differences do not estimate the derivative; such parameters are
/// counted in `kinks` and, with `stop_on_kink`, end the check early.
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
};

inline GradCheckResult gradient_check(pianoq::MicroCnn model, std::span<const pianoq::LabeledImage> batch,
                                      const pianoq::FocalLossConfig& config, std::vector<std::size_t> indices = {},
                                      bool stop_on_kink = false, double h = 1e-5, double floor = 1e-7) {
  std::vector<double> grad(pianoq::MicroCnn::parameter_count());
  model.loss_gradients(batch, config, grad);
  std::uint64_t base = 0;
  model.batch_loss(batch, config, &base);
  if (indices.empty()) {
    indices.resize(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) indices[i] = i;
  }
  GradCheckResult result;
  auto params = model.parameters();
  for (std::size_t idx : indices) {
    const double saved = params[idx];
    std::uint64_t pat_up = 0, pat_down = 0;
    params[idx] = saved + h;
    const double up = model.batch_loss(batch, config, &pat_up);
    params[idx] = saved - h;
    const double down = model.batch_loss(batch, config, &pat_down);
    params[idx] = saved;
    ++result.checked;
    if (pat_up != base || pat_down != base) {
      ++result.kinks;
      if (stop_on_kink) return result;
      continue;
    }
    const double fd = (up - down) / (2.0 * h);
    const double rel = std::abs(fd - grad[idx]) / std::max({std::abs(fd), std::abs(grad[idx]), floor});
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = idx;
    }
  }
  return result;
}

inline pianoq::RowMatrix random_image(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  pianoq::RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// A model whose output is exactly one-hot at `brand` for every input.
inline pianoq::MicroCnn one_hot_model(std::size_t brand) {
  pianoq::MicroCnn model;
  auto bias = model.block("fc.bias");
  for (std::size_t i = 0; i < bias.size(); ++i) bias[i] = i == brand ? 1000.0 : 0.0;
  return model;
}

/// A random model with reasonably spread outputs.
inline pianoq::MicroCnn random_model(std::uint64_t seed) { return pianoq::MicroCnn::initialized(seed); }

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("pianoq_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

/// Minimal RIFF writer independent of encode_wav: any channel count, PCM or float.
inline std::vector<std::uint8_t> raw_wav(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                         std::uint16_t bits, const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> out;
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  auto tag = [&](const char* t) { out.insert(out.end(), t, t + 4); };
  const std::uint16_t block = static_cast<std::uint16_t>(channels * bits / 8);
  tag("RIFF");
  u32(static_cast<std::uint32_t>(36 + payload.size()));
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * block);
  u16(block);
  u16(bits);
  tag("data");
  u32(static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

inline void push_i16(std::vector<std::uint8_t>& out, std::int16_t v) {
  const auto u = static_cast<std::uint16_t>(v);
  out.push_back(static_cast<std::uint8_t>(u & 0xff));
  out.push_back(static_cast<std::uint8_t>(u >> 8));
}

inline void push_i24(std::vector<std::uint8_t>& out, std::int32_t v) {
  const auto u = static_cast<std::uint32_t>(v) & 0xffffffu;
  for (int i = 0; i < 3; ++i) out.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xff));
}

inline void push_f32(std::vector<std::uint8_t>& out, float v) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xff));
}

}  // namespace testing_support
