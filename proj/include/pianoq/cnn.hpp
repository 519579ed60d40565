#pragma once

// Micro-CNN over mel-spectrogram images:
//   3 x [conv 3x3 (pad 1) -> ReLU -> maxpool 2x2] with 16/32/64 channels,
//   global average pool, affine 64 -> 7, softmax.
// Parameters live in one flat vector so optimizers, finite-difference checks
// and checkpoints all address them uniformly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pianoq/error.hpp"
#include "pianoq/focal_loss.hpp"
#include "pianoq/labels.hpp"
#include "pianoq/spectral.hpp"

namespace pianoq {

using ProbabilityArray = std::array<double, kNumBrands>;

/// Numerically stable softmax (max subtraction).
template <std::size_t N>
std::array<double, N> softmax(const std::array<double, N>& logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::array<double, N> out{};
  double sum = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

template <std::size_t N>
std::size_t argmax(const std::array<double, N>& values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

struct LabeledImage {
  const RowMatrix* image = nullptr;
  std::size_t label = 0;
};

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t count = 0;
};

class MicroCnn {
 public:
  static constexpr int kConvLayers = 3;
  static constexpr std::array<int, kConvLayers + 1> kChannels = {1, 16, 32, 64};
  static constexpr int kOutputs = static_cast<int>(kNumBrands);
  static constexpr int kMinInputSide = 8;
  /// Subtracted from every input pixel before conv1 (inputs live in [0, 1]).
  static constexpr double kInputCenter = 0.5;

  MicroCnn() : params_(layout().back().offset + layout().back().count, 0.0) {}

  /// He-normal convolution weights, 1/sqrt(fan_in) head weights, zero biases.
  static MicroCnn initialized(std::uint64_t seed) {
    MicroCnn model;
    std::mt19937_64 rng(seed);
    for (const ParamBlock& block : layout()) {
      if (block.shape.size() == 1) continue;
      int fan_in = 1;
      for (std::size_t d = 1; d < block.shape.size(); ++d) fan_in *= block.shape[d];
      const double scale = block.name == "fc.weight" ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
      std::normal_distribution<double> normal(0.0, scale);
      for (std::size_t i = 0; i < block.count; ++i) model.params_[block.offset + i] = normal(rng);
    }
    return model;
  }

  static const std::vector<ParamBlock>& layout() {
    static const std::vector<ParamBlock> blocks = [] {
      std::vector<ParamBlock> out;
      std::size_t offset = 0;
      auto add = [&](std::string name, std::vector<int> shape) {
        std::size_t count = 1;
        for (int d : shape) count *= static_cast<std::size_t>(d);
        out.push_back({std::move(name), std::move(shape), offset, count});
        offset += count;
      };
      for (int l = 0; l < kConvLayers; ++l) {
        const std::string prefix = "conv" + std::to_string(l + 1);
        add(prefix + ".weight", {kChannels[l + 1], kChannels[l], 3, 3});
        add(prefix + ".bias", {kChannels[l + 1]});
      }
      add("fc.weight", {kOutputs, kChannels.back()});
      add("fc.bias", {kOutputs});
      return out;
    }();
    return blocks;
  }

  static std::size_t parameter_count() { return layout().back().offset + layout().back().count; }

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  std::span<double> block(std::string_view name) {
    const ParamBlock& b = find_block(name);
    return std::span<double>(params_).subspan(b.offset, b.count);
  }
  std::span<const double> block(std::string_view name) const {
    const ParamBlock& b = find_block(name);
    return std::span<const double>(params_).subspan(b.offset, b.count);
  }

  bool all_finite() const {
    return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const MicroCnn& a, const MicroCnn& b) { return a.params_ == b.params_; }

  struct Output {
    std::array<double, kNumBrands> logits{};
    ProbabilityArray probs{};
  };

  /// Production entry point: the image must be kMelBands x kModelFrames.
  Output forward(const ModelInput& input) const {
    if (input.image.rows() != kMelBands || input.image.cols() != kModelFrames) {
      throw Error(ErrorCode::ShapeMismatch, "model input must be " + std::to_string(kMelBands) + "x" +
                                                std::to_string(kModelFrames));
    }
    return forward_image(input.image);
  }

  /// Same network on any image at least kMinInputSide on each side.
  Output forward_image(const RowMatrix& image) const {
    Cache cache;
    return run_forward(image, cache);
  }

  /// Mean focal loss over the batch. If `pattern` is given it receives a hash of
  /// every ReLU on/off state and max-pool winner; the loss is smooth in the
  /// parameters wherever that hash stays constant.
  double batch_loss(std::span<const LabeledImage> batch, const FocalLossConfig& config,
                    std::uint64_t* pattern = nullptr) const {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "batch is empty");
    double total = 0.0;
    Cache cache;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const LabeledImage& item : batch) {
      const Output out = run_forward(*item.image, cache);
      total += focal_loss(out.probs, item.label, config);
      if (pattern != nullptr) h = hash_pattern(cache, h);
    }
    if (pattern != nullptr) *pattern = h;
    return total / static_cast<double>(batch.size());
  }

  /// Mean focal loss over the batch and its exact gradient with respect to
  /// every parameter (written to grad, which must have parameter_count() entries).
  /// If `correct` is given, the number of argmax hits is added to it.
  double loss_gradients(std::span<const LabeledImage> batch, const FocalLossConfig& config,
                        std::span<double> grad, std::size_t* correct = nullptr) const {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "batch is empty");
    if (grad.size() != params_.size()) throw Error(ErrorCode::ShapeMismatch, "gradient buffer size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);
    double total = 0.0;
    Cache cache;
    for (const LabeledImage& item : batch) {
      if (item.label >= kNumBrands) throw Error(ErrorCode::InvalidArgument, "label out of range");
      const Output out = run_forward(*item.image, cache);
      total += focal_loss(out.probs, item.label, config);
      if (correct != nullptr && argmax(out.probs) == item.label) ++*correct;
      std::array<double, kNumBrands> dlogits{};
      focal_loss_logit_grad(out.probs, item.label, config, dlogits);
      run_backward(cache, dlogits, grad);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : grad) g *= inv;
    return total * inv;
  }

 private:
  struct ConvCache {
    int height = 0, width = 0;  // input spatial size
    RowMatrix col;              // (cin*9) x (h*w)
    RowMatrix activated;        // cout x (h*w), after ReLU
    std::vector<Eigen::Index> argmax;  // per pooled cell: index into activated plane
    int pooled_h = 0, pooled_w = 0;
  };
  struct Cache {
    std::array<ConvCache, kConvLayers> conv;
    Eigen::VectorXd pooled_mean;  // global average pool output
    int final_cells = 0;
  };

  static std::uint64_t hash_pattern(const Cache& cache, std::uint64_t h) {
    auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 0x100000001b3ULL;
    };
    for (const ConvCache& cc : cache.conv) {
      for (Eigen::Index i = 0; i < cc.activated.size(); ++i) mix(cc.activated.data()[i] > 0.0 ? 1u : 2u);
      for (Eigen::Index a : cc.argmax) mix(static_cast<std::uint64_t>(a));
    }
    return h;
  }

  const ParamBlock& find_block(std::string_view name) const {
    for (const ParamBlock& b : layout()) {
      if (b.name == name) return b;
    }
    throw Error(ErrorCode::InvalidArgument, "no parameter block named " + std::string(name));
  }

  using ConstMap = Eigen::Map<const RowMatrix>;
  using MutMap = Eigen::Map<RowMatrix>;

  ConstMap weight_matrix(int layer) const {
    const ParamBlock& b = layout()[static_cast<std::size_t>(2 * layer)];
    return ConstMap(params_.data() + b.offset, b.shape[0], static_cast<Eigen::Index>(b.count) / b.shape[0]);
  }
  const double* bias_ptr(int layer) const { return params_.data() + layout()[static_cast<std::size_t>(2 * layer + 1)].offset; }

  static void im2col(const RowMatrix& in, int h, int w, RowMatrix& col) {
    const auto channels = in.rows();
    col.setZero(channels * 9, static_cast<Eigen::Index>(h) * w);
    for (Eigen::Index c = 0; c < channels; ++c) {
      const double* plane = in.row(c).data();
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          double* dst = col.row(c * 9 + ky * 3 + kx).data();
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            for (int x = 0; x < w; ++x) {
              const int sx = x + kx - 1;
              if (sx >= 0 && sx < w) dst[y * w + x] = plane[sy * w + sx];
            }
          }
        }
      }
    }
  }

  static void col2im(const RowMatrix& dcol, int h, int w, RowMatrix& din) {
    const auto channels = dcol.rows() / 9;
    din.setZero(channels, static_cast<Eigen::Index>(h) * w);
    for (Eigen::Index c = 0; c < channels; ++c) {
      double* plane = din.row(c).data();
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double* src = dcol.row(c * 9 + ky * 3 + kx).data();
          for (int y = 0; y < h; ++y) {
            const int sy = y + ky - 1;
            if (sy < 0 || sy >= h) continue;
            for (int x = 0; x < w; ++x) {
              const int sx = x + kx - 1;
              if (sx >= 0 && sx < w) plane[sy * w + sx] += src[y * w + x];
            }
          }
        }
      }
    }
  }

  Output run_forward(const RowMatrix& image, Cache& cache) const {
    if (image.rows() < kMinInputSide || image.cols() < kMinInputSide) {
      throw Error(ErrorCode::ShapeMismatch, "image smaller than " + std::to_string(kMinInputSide) + " per side");
    }
    int h = static_cast<int>(image.rows()), w = static_cast<int>(image.cols());
    RowMatrix act = Eigen::Map<const RowMatrix>(image.data(), 1, image.size()).array() - kInputCenter;

    for (int l = 0; l < kConvLayers; ++l) {
      ConvCache& cc = cache.conv[static_cast<std::size_t>(l)];
      cc.height = h;
      cc.width = w;
      im2col(act, h, w, cc.col);
      cc.activated.noalias() = weight_matrix(l) * cc.col;
      const double* bias = bias_ptr(l);
      for (Eigen::Index c = 0; c < cc.activated.rows(); ++c) {
        auto row = cc.activated.row(c);
        row = (row.array() + bias[c]).cwiseMax(0.0);
      }
      const int ph = h / 2, pw = w / 2;
      cc.pooled_h = ph;
      cc.pooled_w = pw;
      RowMatrix pooled(cc.activated.rows(), static_cast<Eigen::Index>(ph) * pw);
      cc.argmax.resize(static_cast<std::size_t>(pooled.size()));
      for (Eigen::Index c = 0; c < cc.activated.rows(); ++c) {
        const double* plane = cc.activated.row(c).data();
        for (int y = 0; y < ph; ++y) {
          for (int x = 0; x < pw; ++x) {
            Eigen::Index best = (2 * y) * w + 2 * x;
            for (Eigen::Index cand : {best + 1, best + w, best + w + 1}) {
              if (plane[cand] > plane[best]) best = cand;
            }
            pooled(c, y * pw + x) = plane[best];
            cc.argmax[static_cast<std::size_t>(c * ph * pw + y * pw + x)] = best;
          }
        }
      }
      act = std::move(pooled);
      h = ph;
      w = pw;
    }

    cache.final_cells = h * w;
    cache.pooled_mean = act.rowwise().mean();

    const ParamBlock& fw = layout()[2 * kConvLayers];
    const ParamBlock& fb = layout()[2 * kConvLayers + 1];
    ConstMap fc(params_.data() + fw.offset, kOutputs, kChannels.back());
    const Eigen::VectorXd logits = fc * cache.pooled_mean +
                                   Eigen::Map<const Eigen::VectorXd>(params_.data() + fb.offset, kOutputs);
    Output out;
    for (int i = 0; i < kOutputs; ++i) out.logits[static_cast<std::size_t>(i)] = logits(i);
    out.probs = softmax(out.logits);
    return out;
  }

  void run_backward(const Cache& cache, const std::array<double, kNumBrands>& dlogits, std::span<double> grad) const {
    const ParamBlock& fw = layout()[2 * kConvLayers];
    const ParamBlock& fb = layout()[2 * kConvLayers + 1];
    const Eigen::Map<const Eigen::VectorXd> dz(dlogits.data(), kOutputs);
    MutMap(grad.data() + fw.offset, kOutputs, kChannels.back()).noalias() += dz * cache.pooled_mean.transpose();
    Eigen::Map<Eigen::VectorXd>(grad.data() + fb.offset, kOutputs) += dz;
    const ConstMap fc(params_.data() + fw.offset, kOutputs, kChannels.back());
    const Eigen::VectorXd dmean = fc.transpose() * dz;

    // gradient w.r.t. the last pooled map
    RowMatrix dpooled(kChannels.back(), cache.final_cells);
    for (Eigen::Index c = 0; c < dpooled.rows(); ++c) dpooled.row(c).setConstant(dmean(c) / cache.final_cells);

    RowMatrix dact, dcol, din;
    for (int l = kConvLayers - 1; l >= 0; --l) {
      const ConvCache& cc = cache.conv[static_cast<std::size_t>(l)];
      const Eigen::Index cells = static_cast<Eigen::Index>(cc.pooled_h) * cc.pooled_w;
      dact.setZero(cc.activated.rows(), cc.activated.cols());
      for (Eigen::Index c = 0; c < dact.rows(); ++c) {
        for (Eigen::Index i = 0; i < cells; ++i) {
          const Eigen::Index src = cc.argmax[static_cast<std::size_t>(c * cells + i)];
          if (cc.activated(c, src) > 0.0) dact(c, src) += dpooled(c, i);
        }
      }
      const ParamBlock& wb = layout()[static_cast<std::size_t>(2 * l)];
      const ParamBlock& bb = layout()[static_cast<std::size_t>(2 * l + 1)];
      MutMap(grad.data() + wb.offset, wb.shape[0], static_cast<Eigen::Index>(wb.count) / wb.shape[0]).noalias() +=
          dact * cc.col.transpose();
      Eigen::Map<Eigen::VectorXd>(grad.data() + bb.offset, bb.shape[0]) += dact.rowwise().sum();
      if (l == 0) break;
      dcol.noalias() = weight_matrix(l).transpose() * dact;
      col2im(dcol, cc.height, cc.width, din);
      dpooled = std::move(din);
    }
  }

  std::vector<double> params_;
};

}  // namespace pianoq
