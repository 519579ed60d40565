#pragma once

// Dataset assembly with source-level splits, focal-loss training of the
// micro-CNN, evaluation metrics and clip-level prediction.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pianoq/audio.hpp"
#include "pianoq/cnn.hpp"
#include "pianoq/csv.hpp"
#include "pianoq/error.hpp"
#include "pianoq/focal_loss.hpp"
#include "pianoq/labels.hpp"
#include "pianoq/spectral.hpp"

namespace pianoq {

enum class Split { Train, Val, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

struct DatasetEntry {
  ModelInput input;
  std::size_t label = 0;
  std::string source_id;
};

struct DatasetIndex {
  std::vector<DatasetEntry> entries;
  std::map<std::string, Split> split;

  std::vector<LabeledImage> view(Split which) const {
    std::vector<LabeledImage> out;
    for (const DatasetEntry& e : entries) {
      const auto it = split.find(e.source_id);
      if (it != split.end() && it->second == which) out.push_back({&e.input.image, e.label});
    }
    return out;
  }

  std::vector<LabeledImage> all() const {
    std::vector<LabeledImage> out;
    out.reserve(entries.size());
    for (const DatasetEntry& e : entries) out.push_back({&e.input.image, e.label});
    return out;
  }
};

/// Slice-level model inputs for one clip, resampled to the working rate.
inline std::vector<ModelInput> clip_model_inputs(const AudioClip& clip) {
  const AudioClip working = resample(clip, kWorkingRateHz);
  const SliceSet slices = slice(working);
  std::vector<ModelInput> out;
  out.reserve(slices.slices.size());
  for (const AudioClip& s : slices.slices) out.push_back(to_model_input(mel_spectrogram(s)));
  return out;
}

/// Appends every slice of the clip, all tagged with the clip's source_id.
inline std::size_t append_clip(DatasetIndex& index, const AudioClip& clip, std::size_t label) {
  if (label >= kNumBrands) throw Error(ErrorCode::InvalidArgument, "label out of range");
  auto inputs = clip_model_inputs(clip);
  for (ModelInput& in : inputs) index.entries.push_back({std::move(in), label, clip.source_id});
  return inputs.size();
}

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
};

/// Assigns whole recordings to train/val/test, stratified by label. Each
/// label with at least three sources contributes at least one source to
/// every split.
inline void assign_splits(DatasetIndex& index, std::uint64_t seed, SplitFractions fractions = {}) {
  std::map<std::size_t, std::set<std::string>> sources_by_label;
  std::map<std::string, std::size_t> label_of;
  for (const DatasetEntry& e : index.entries) {
    auto [it, inserted] = label_of.emplace(e.source_id, e.label);
    if (!inserted && it->second != e.label) {
      throw Error(ErrorCode::InvalidArgument, "source " + e.source_id + " carries more than one label");
    }
    sources_by_label[e.label].insert(e.source_id);
  }
  index.split.clear();
  std::mt19937_64 rng(seed);
  for (const auto& [label, sources] : sources_by_label) {
    std::vector<std::string> ids(sources.begin(), sources.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto n = ids.size();
    std::size_t n_val = static_cast<std::size_t>(std::llround(fractions.val * static_cast<double>(n)));
    std::size_t n_test = static_cast<std::size_t>(
        std::llround((1.0 - fractions.train - fractions.val) * static_cast<double>(n)));
    if (n >= 3) {
      n_val = std::max<std::size_t>(n_val, 1);
      n_test = std::max<std::size_t>(n_test, 1);
    }
    n_val = std::min(n_val, n);
    n_test = std::min(n_test, n - n_val);
    const std::size_t n_train = n - n_val - n_test;
    for (std::size_t i = 0; i < n; ++i) {
      index.split[ids[i]] = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
    }
  }
}

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  int epochs = 30;
  double gamma = 0.0;
  std::uint64_t seed = 42;
  /// Overrides the inverse-frequency weights computed from the train split.
  std::optional<ClassWeights> alphas;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  MicroCnn model;
  std::vector<EpochStats> history;
  ClassWeights alphas;
  int best_epoch = 0;
};

inline std::array<std::size_t, kNumBrands> class_counts(std::span<const LabeledImage> items) {
  std::array<std::size_t, kNumBrands> counts{};
  for (const LabeledImage& it : items) ++counts.at(it.label);
  return counts;
}

/// Mean loss and accuracy of the model over a set of images.
inline std::pair<double, double> loss_and_accuracy(const MicroCnn& model, std::span<const LabeledImage> items,
                                                   const FocalLossConfig& config) {
  if (items.empty()) return {0.0, 0.0};
  double loss = 0.0;
  std::size_t hits = 0;
  for (const LabeledImage& it : items) {
    const auto out = model.forward_image(*it.image);
    loss += focal_loss(out.probs, it.label, config);
    if (argmax(out.probs) == it.label) ++hits;
  }
  const auto n = static_cast<double>(items.size());
  return {loss / n, static_cast<double>(hits) / n};
}

/// Mini-batch SGD with momentum on the mean focal loss. Deterministic given
/// the seed; returns the parameters of the epoch with the best validation
/// accuracy (earliest on ties).
inline TrainResult train(const DatasetIndex& index, const TrainConfig& config) {
  const auto train_set = index.view(Split::Train);
  const auto val_set = index.view(Split::Val);
  if (train_set.empty()) throw Error(ErrorCode::EmptySplit, "train split is empty");
  if (val_set.empty()) throw Error(ErrorCode::EmptySplit, "validation split is empty");
  if (config.batch_size == 0) throw Error(ErrorCode::InvalidArgument, "batch size must be positive");

  const auto counts = class_counts(train_set);
  ClassWeights alphas = config.alphas ? *config.alphas : compute_alphas(counts);
  const FocalLossConfig loss_config(alphas, config.gamma);

  TrainResult result;
  result.alphas = alphas;
  MicroCnn model = MicroCnn::initialized(config.seed);
  MicroCnn best = model;
  double best_val = -1.0;

  std::vector<double> grad(MicroCnn::parameter_count());
  std::vector<double> velocity(MicroCnn::parameter_count(), 0.0);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<LabeledImage> batch;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(train_set[order[i]]);
      const double loss = model.loss_gradients(batch, loss_config, grad, &hits);
      loss_sum += loss * static_cast<double>(batch.size());
      auto params = model.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        velocity[p] = config.momentum * velocity[p] - config.learning_rate * grad[p];
        params[p] += velocity[p];
      }
    }
    if (!model.all_finite()) throw Error(ErrorCode::Internal, "training diverged at epoch " + std::to_string(epoch));

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_set.size());
    stats.train_accuracy = static_cast<double>(hits) / static_cast<double>(train_set.size());
    std::tie(stats.val_loss, stats.val_accuracy) = loss_and_accuracy(model, val_set, loss_config);
    result.history.push_back(stats);
    if (config.on_epoch) config.on_epoch(stats);
    if (stats.val_accuracy > best_val) {
      best_val = stats.val_accuracy;
      best = model;
      result.best_epoch = epoch;
    }
  }
  result.model = config.epochs > 0 ? std::move(best) : std::move(model);
  return result;
}

inline void write_history_csv(std::ostream& out, const std::vector<EpochStats>& history) {
  out << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
  out.precision(12);
  for (const EpochStats& s : history) {
    out << s.epoch << ',' << s.train_loss << ',' << s.train_accuracy << ',' << s.val_loss << ',' << s.val_accuracy
        << '\n';
  }
}

struct Metrics {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // rows true, columns predicted
  std::vector<std::size_t> support;
  std::vector<double> per_class_f1;
};

/// Accuracy, per-class F1 and the support-weighted F1 of a confusion matrix.
/// A class with no predictions has precision 0.
inline Metrics metrics_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
  const std::size_t k = confusion.size();
  Metrics m;
  m.support.assign(k, 0);
  m.per_class_f1.assign(k, 0.0);
  std::size_t total = 0, correct = 0;
  std::vector<std::size_t> predicted(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    if (confusion[i].size() != k) throw Error(ErrorCode::ShapeMismatch, "confusion matrix must be square");
    for (std::size_t j = 0; j < k; ++j) {
      m.support[i] += confusion[i][j];
      predicted[j] += confusion[i][j];
    }
    total += m.support[i];
    correct += confusion[i][i];
  }
  if (total == 0) throw Error(ErrorCode::EmptySplit, "no samples to evaluate");
  m.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  for (std::size_t i = 0; i < k; ++i) {
    const double tp = static_cast<double>(confusion[i][i]);
    const double precision = predicted[i] ? tp / static_cast<double>(predicted[i]) : 0.0;
    const double recall = m.support[i] ? tp / static_cast<double>(m.support[i]) : 0.0;
    m.per_class_f1[i] = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    m.weighted_f1 += m.per_class_f1[i] * static_cast<double>(m.support[i]) / static_cast<double>(total);
  }
  m.confusion = std::move(confusion);
  return m;
}

inline Metrics evaluate(const MicroCnn& model, std::span<const LabeledImage> items) {
  if (items.empty()) throw Error(ErrorCode::EmptySplit, "nothing to evaluate");
  std::vector<std::vector<std::size_t>> confusion(kNumBrands, std::vector<std::size_t>(kNumBrands, 0));
  for (const LabeledImage& it : items) {
    const auto out = model.forward_image(*it.image);
    ++confusion.at(it.label)[argmax(out.probs)];
  }
  return metrics_from_confusion(std::move(confusion));
}

inline Metrics evaluate(const MicroCnn& model, const DatasetIndex& index, Split which = Split::Test) {
  const auto items = index.view(which);
  if (items.empty()) throw Error(ErrorCode::EmptySplit, to_string(which) + " split is empty");
  return evaluate(model, items);
}

struct ClipPrediction {
  ProbabilityVector probabilities;
  std::size_t slices_used = 0;
};

/// Arithmetic mean of the slice probabilities, renormalized.
inline ClipPrediction predict_clip(const MicroCnn& model, const AudioClip& clip,
                                   const std::array<std::string, kNumBrands>& labels = canonical_labels()) {
  const auto inputs = clip_model_inputs(clip);
  if (inputs.empty()) throw Error(ErrorCode::TooShort, "clip is shorter than one 0.2 s slice");
  ClipPrediction pred;
  pred.probabilities.labels = labels;
  auto& acc = pred.probabilities.probs;
  for (const ModelInput& in : inputs) {
    const auto out = model.forward(in);
    for (std::size_t i = 0; i < kNumBrands; ++i) acc[i] += out.probs[i];
  }
  const double sum = std::accumulate(acc.begin(), acc.end(), 0.0);
  for (double& p : acc) p /= sum;
  pred.slices_used = inputs.size();
  return pred;
}

struct ManifestRow {
  std::filesystem::path path;
  std::size_t label = 0;
  std::string source_id;
};

/// Reads `path,label,source_id`; labels may be names or class indices.
/// Relative paths resolve against the manifest's directory.
inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::FileNotFound, manifest.string());
  const csv::Table table = csv::read(in);
  const auto c_path = table.require_column("path");
  const auto c_label = table.require_column("label");
  const auto c_source = table.require_column("source_id");
  std::vector<ManifestRow> rows;
  for (const auto& r : table.rows) {
    ManifestRow row;
    row.path = r[c_path];
    if (row.path.is_relative()) row.path = manifest.parent_path() / row.path;
    if (auto idx = brand_index(r[c_label])) {
      row.label = *idx;
    } else if (auto num = csv::parse_int(r[c_label]); num && *num >= 0 && *num < static_cast<long long>(kNumBrands)) {
      row.label = static_cast<std::size_t>(*num);
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown label '" + r[c_label] + "'");
    }
    row.source_id = r[c_source].empty() ? row.path.stem().string() : r[c_source];
    rows.push_back(std::move(row));
  }
  return rows;
}

inline DatasetIndex build_index(const std::vector<ManifestRow>& rows) {
  DatasetIndex index;
  for (const ManifestRow& row : rows) {
    AudioClip clip = load_wav(row.path);
    clip.source_id = row.source_id;
    append_clip(index, clip, row.label);
  }
  return index;
}

}  // namespace pianoq
