#pragma once

// Quality profiles, expectation scoring and listening-survey statistics.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pianoq/csv.hpp"
#include "pianoq/error.hpp"
#include "pianoq/labels.hpp"

namespace pianoq {

enum Register : std::size_t { kLow = 0, kMiddle = 1, kHigh = 2, kOverall = 3 };
inline constexpr std::array<std::string_view, 4> kRegisterNames = {"low", "middle", "high", "overall"};

/// Per-brand mean quality on the 1..5 scale, in a declared label order.
struct QualityProfile {
  std::string id;
  int version = 1;
  std::array<std::string, kNumBrands> labels = canonical_labels();
  std::array<double, kNumBrands> overall_q{};
  std::optional<std::array<std::array<double, 3>, kNumBrands>> register_q;
  nlohmann::json source = nlohmann::json::object();  // the config as loaded
};

namespace detail {

inline void check_quality(double q, const std::string& what) {
  if (!(q >= 1.0 && q <= 5.0)) {
    throw Error(ErrorCode::InvalidArgument, what + " = " + std::to_string(q) + " is outside [1, 5]");
  }
}

inline std::string hash_id(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << "profile-" << std::hex << h;
  return out.str();
}

}  // namespace detail

/// Schema: {version, id?, labels[7], overall_q[7], register_q?[7][3], notes?}.
/// Labels must be a permutation of the seven canonical brands.
inline QualityProfile profile_from_json(const nlohmann::json& j) {
  QualityProfile p;
  try {
    p.version = j.value("version", 1);
    const auto labels = j.at("labels").get<std::vector<std::string>>();
    const auto overall = j.at("overall_q").get<std::vector<double>>();
    if (labels.size() != kNumBrands || overall.size() != kNumBrands) {
      throw Error(ErrorCode::InvalidArgument, "profile needs exactly 7 labels and 7 overall_q values");
    }
    std::set<std::string> seen;
    for (std::size_t i = 0; i < kNumBrands; ++i) {
      if (!brand_index(labels[i])) throw Error(ErrorCode::InvalidArgument, "unknown piano label '" + labels[i] + "'");
      if (!seen.insert(labels[i]).second) throw Error(ErrorCode::InvalidArgument, "duplicate label '" + labels[i] + "'");
      p.labels[i] = labels[i];
      detail::check_quality(overall[i], "overall_q[" + labels[i] + "]");
      p.overall_q[i] = overall[i];
    }
    if (j.contains("register_q") && !j["register_q"].is_null()) {
      const auto reg = j["register_q"].get<std::vector<std::vector<double>>>();
      if (reg.size() != kNumBrands) throw Error(ErrorCode::InvalidArgument, "register_q needs 7 rows");
      std::array<std::array<double, 3>, kNumBrands> table{};
      for (std::size_t i = 0; i < kNumBrands; ++i) {
        if (reg[i].size() != 3) throw Error(ErrorCode::InvalidArgument, "register_q rows need 3 values");
        for (std::size_t r = 0; r < 3; ++r) {
          detail::check_quality(reg[i][r], "register_q[" + labels[i] + "]");
          table[i][r] = reg[i][r];
        }
      }
      p.register_q = table;
    }
    p.id = j.contains("id") ? j["id"].get<std::string>() : detail::hash_id(j.dump());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed quality profile: ") + e.what());
  }
  p.source = j;
  return p;
}

inline QualityProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::UnsupportedFormat, std::string("profile is not JSON: ") + e.what());
  }
  return profile_from_json(j);
}

/// sum_i P_i * Q_i. The probability labels must match the profile order.
inline double expected_score(const ProbabilityVector& probs, const QualityProfile& profile) {
  if (probs.labels != profile.labels) {
    throw Error(ErrorCode::LabelOrderMismatch, "probability labels and profile labels are ordered differently");
  }
  double e = 0.0;
  for (std::size_t i = 0; i < kNumBrands; ++i) e += probs.probs[i] * profile.overall_q[i];
  return e;
}

/// Expected score per register (low, middle, high) when the profile has them.
inline std::optional<std::array<double, 3>> register_scores(const ProbabilityVector& probs,
                                                            const QualityProfile& profile) {
  if (!profile.register_q) return std::nullopt;
  if (probs.labels != profile.labels) {
    throw Error(ErrorCode::LabelOrderMismatch, "probability labels and profile labels are ordered differently");
  }
  std::array<double, 3> out{};
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < kNumBrands; ++i) out[r] += probs.probs[i] * (*profile.register_q)[i][r];
  }
  return out;
}

struct SurveyRow {
  std::string participant;
  std::string piano;
  std::array<int, 4> ratings{};  // low, middle, high, overall
};

struct SurveyTable {
  std::vector<SurveyRow> rows;

  std::size_t participant_count() const {
    std::set<std::string> ids;
    for (const auto& r : rows) ids.insert(r.participant);
    return ids.size();
  }

  /// Pianos in order of first appearance.
  std::vector<std::string> piano_labels() const {
    std::vector<std::string> out;
    for (const auto& r : rows) {
      if (std::find(out.begin(), out.end(), r.piano) == out.end()) out.push_back(r.piano);
    }
    return out;
  }
};

/// Header `participant,piano,low,middle,high,overall`; ratings are integers 1..5.
inline SurveyTable read_survey_csv(std::istream& in) {
  const csv::Table table = csv::read(in);
  const std::array<std::size_t, 6> cols = {
      table.require_column("participant"), table.require_column("piano"), table.require_column("low"),
      table.require_column("middle"),      table.require_column("high"),  table.require_column("overall")};
  SurveyTable survey;
  for (const auto& r : table.rows) {
    SurveyRow row;
    row.participant = r[cols[0]];
    row.piano = r[cols[1]];
    for (std::size_t k = 0; k < 4; ++k) {
      const auto v = csv::parse_int(r[cols[k + 2]]);
      if (!v || *v < 1 || *v > 5) {
        throw Error(ErrorCode::InvalidArgument, "rating '" + r[cols[k + 2]] + "' is not an integer in 1..5");
      }
      row.ratings[k] = static_cast<int>(*v);
    }
    survey.rows.push_back(std::move(row));
  }
  return survey;
}

inline SurveyTable load_survey(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, path.string());
  return read_survey_csv(in);
}

struct SurveyAggregate {
  std::size_t participants = 0;
  std::vector<std::string> pianos;
  std::vector<std::array<double, 4>> means;  // per piano: low, middle, high, overall

  /// Profile over the seven canonical brands; nullopt when any brand is
  /// missing from the survey.
  std::optional<QualityProfile> to_profile() const {
    QualityProfile p;
    std::array<std::array<double, 3>, kNumBrands> reg{};
    for (std::size_t i = 0; i < kNumBrands; ++i) {
      const auto it = std::find(pianos.begin(), pianos.end(), p.labels[i]);
      if (it == pianos.end()) return std::nullopt;
      const auto& m = means[static_cast<std::size_t>(it - pianos.begin())];
      p.overall_q[i] = m[kOverall];
      reg[i] = {m[kLow], m[kMiddle], m[kHigh]};
    }
    p.register_q = reg;
    p.id = "survey";
    return p;
  }
};

/// Arithmetic means over participants for every (piano, register).
inline SurveyAggregate aggregate_survey(const SurveyTable& table) {
  if (table.rows.empty()) throw Error(ErrorCode::EmptySurvey, "survey has no ratings");
  SurveyAggregate agg;
  agg.participants = table.participant_count();
  agg.pianos = table.piano_labels();
  std::vector<std::array<double, 4>> sums(agg.pianos.size(), std::array<double, 4>{});
  std::vector<std::size_t> counts(agg.pianos.size(), 0);
  for (const auto& row : table.rows) {
    const auto idx = static_cast<std::size_t>(std::find(agg.pianos.begin(), agg.pianos.end(), row.piano) - agg.pianos.begin());
    for (std::size_t k = 0; k < 4; ++k) sums[idx][k] += row.ratings[k];
    ++counts[idx];
  }
  agg.means.resize(agg.pianos.size());
  for (std::size_t i = 0; i < agg.pianos.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) agg.means[i][k] = sums[i][k] / static_cast<double>(counts[i]);
  }
  return agg;
}

/// Pearson correlation: sum of deviation products over the product of
/// deviation norms.
inline double pearson_corr(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "sequences differ in length");
  if (x.size() < 2) throw Error(ErrorCode::LengthMismatch, "need at least two observations");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::ZeroVariance, "correlation undefined for a constant sequence");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 4x4 correlations between low/middle/high/overall, computed over the
/// per-piano mean ratings.
inline std::array<std::array<double, 4>, 4> correlation_matrix(const SurveyAggregate& agg) {
  std::array<std::vector<double>, 4> columns;
  for (const auto& m : agg.means) {
    for (std::size_t k = 0; k < 4; ++k) columns[k].push_back(m[k]);
  }
  std::array<std::array<double, 4>, 4> out{};
  for (std::size_t a = 0; a < 4; ++a) {
    out[a][a] = 1.0;
    for (std::size_t b = a + 1; b < 4; ++b) {
      out[a][b] = out[b][a] = pearson_corr(columns[a], columns[b]);
    }
  }
  return out;
}

inline std::array<std::array<double, 4>, 4> correlation_matrix(const SurveyTable& table) {
  return correlation_matrix(aggregate_survey(table));
}

}  // namespace pianoq
