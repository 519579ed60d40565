#pragma once

// PQM1 model checkpoints.
//
// Layout (all integers little-endian):
//   bytes 0..3   magic "PQM1"
//   bytes 4..11  u64 length L of the JSON header
//   next L bytes UTF-8 JSON header: format_version, model_id, labels, layers[]
//                (name, shape, offset, count) and optional metadata
//   remainder    parameters as IEEE-754 binary64, little-endian, in layer order

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pianoq/audio.hpp"
#include "pianoq/cnn.hpp"
#include "pianoq/error.hpp"
#include "pianoq/labels.hpp"

namespace pianoq {

inline constexpr char kCheckpointMagic[4] = {'P', 'Q', 'M', '1'};
inline constexpr int kCheckpointVersion = 1;

struct LoadedModel {
  MicroCnn model;
  std::string model_id;
  std::array<std::string, kNumBrands> labels = canonical_labels();
  nlohmann::json metadata = nlohmann::json::object();
};

/// FNV-1a over the little-endian parameter bytes; stable identifier of a parameter set.
inline std::string model_fingerprint(const MicroCnn& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : model.parameters()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << "pqm-" << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

inline std::vector<std::uint8_t> encode_checkpoint(const MicroCnn& model,
                                                   const std::array<std::string, kNumBrands>& labels = canonical_labels(),
                                                   const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::ordered_json header;
  header["format_version"] = kCheckpointVersion;
  header["model_id"] = model_fingerprint(model);
  header["labels"] = labels;
  header["dtype"] = "f64le";
  auto layers = nlohmann::ordered_json::array();
  for (const ParamBlock& b : MicroCnn::layout()) {
    layers.push_back({{"name", b.name}, {"shape", b.shape}, {"offset", b.offset}, {"count", b.count}});
  }
  header["layers"] = layers;
  header["metadata"] = metadata;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  const auto len = static_cast<std::uint64_t>(text.size());
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((len >> (8 * i)) & 0xffu));
  out.insert(out.end(), text.begin(), text.end());
  for (double v : model.parameters()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xffu));
  }
  return out;
}

inline LoadedModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error(ErrorCode::UnsupportedFormat, "not a PQM1 checkpoint");
  }
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(bytes[4 + static_cast<std::size_t>(i)]) << (8 * i);
  if (len > bytes.size() - 12) throw Error(ErrorCode::CorruptHeader, "checkpoint header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptHeader, std::string("checkpoint header is not JSON: ") + e.what());
  }

  LoadedModel loaded;
  try {
    if (header.at("format_version").get<int>() != kCheckpointVersion) {
      throw Error(ErrorCode::UnsupportedFormat, "unsupported checkpoint version");
    }
    const auto& layers = header.at("layers");
    const auto& expected = MicroCnn::layout();
    if (layers.size() != expected.size()) throw Error(ErrorCode::CorruptHeader, "layer manifest does not match MicroCnn");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (layers[i].at("name").get<std::string>() != expected[i].name ||
          layers[i].at("shape").get<std::vector<int>>() != expected[i].shape ||
          layers[i].at("offset").get<std::size_t>() != expected[i].offset) {
        throw Error(ErrorCode::CorruptHeader, "layer manifest mismatch at " + expected[i].name);
      }
    }
    const auto labels = header.at("labels").get<std::vector<std::string>>();
    if (labels.size() != kNumBrands) throw Error(ErrorCode::CorruptHeader, "checkpoint must carry 7 labels");
    std::copy(labels.begin(), labels.end(), loaded.labels.begin());
    if (header.contains("metadata")) loaded.metadata = header["metadata"];
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptHeader, std::string("bad checkpoint header: ") + e.what());
  }

  const std::size_t body = 12 + static_cast<std::size_t>(len);
  const std::size_t count = MicroCnn::parameter_count();
  if (bytes.size() - body != count * 8) throw Error(ErrorCode::CorruptHeader, "parameter block has wrong size");
  auto params = loaded.model.parameters();
  for (std::size_t p = 0; p < count; ++p) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[body + p * 8 + static_cast<std::size_t>(i)]) << (8 * i);
    params[p] = std::bit_cast<double>(bits);
  }
  if (!loaded.model.all_finite()) throw Error(ErrorCode::CorruptHeader, "checkpoint holds non-finite parameters");
  loaded.model_id = model_fingerprint(loaded.model);
  if (header.value("model_id", loaded.model_id) != loaded.model_id) {
    throw Error(ErrorCode::CorruptHeader, "model_id does not match parameters");
  }
  return loaded;
}

inline void save_checkpoint(const std::filesystem::path& path, const MicroCnn& model,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  const auto bytes = encode_checkpoint(model, canonical_labels(), metadata);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline LoadedModel load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::FileNotFound, path.string());
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace pianoq
