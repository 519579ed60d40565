#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace pianoq {

inline constexpr std::size_t kNumBrands = 7;

/// Piano labels in canonical class order. Class index i of every model and
/// profile refers to kBrandLabels[i].
inline constexpr std::array<std::string_view, kNumBrands> kBrandLabels = {
    "PearlRiver", "YoungChang", "Steinway-T", "Hsinghai", "Kawai", "Steinway", "Kawai-G",
};

inline std::array<std::string, kNumBrands> canonical_labels() {
  std::array<std::string, kNumBrands> out;
  for (std::size_t i = 0; i < kNumBrands; ++i) out[i] = std::string(kBrandLabels[i]);
  return out;
}

inline std::optional<std::size_t> brand_index(std::string_view label) {
  for (std::size_t i = 0; i < kBrandLabels.size(); ++i) {
    if (kBrandLabels[i] == label) return i;
  }
  return std::nullopt;
}

/// Classifier output: one probability per label, in the order of `labels`.
struct ProbabilityVector {
  std::array<std::string, kNumBrands> labels = canonical_labels();
  std::array<double, kNumBrands> probs{};

  double sum() const {
    double s = 0.0;
    for (double p : probs) s += p;
    return s;
  }
};

}  // namespace pianoq
