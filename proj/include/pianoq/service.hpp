#pragma once

// Clip scoring shared by the CLI and the HTTP service, and the service itself.
//
// Routes:
//   POST /api/score    multipart upload with one WAV part -> ScoreResponse
//   GET  /api/profile  active quality profile
//   GET  /api/pianos   the seven piano labels
//   GET  /api/health   {"status":"ok","model_id":...}, 503 until loaded
// Every non-2xx response carries {"error", "detail"}.

#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>

#include <json.hpp>

// Eigen before httplib: <resolv.h> defines a `_res` macro that collides with
// Eigen parameter names.
#include "pianoq/audio.hpp"
#include "pianoq/checkpoint.hpp"
#include "pianoq/classifier.hpp"
#include "pianoq/error.hpp"
#include "pianoq/labels.hpp"
#include "pianoq/scoring.hpp"

#include <httplib.h>

namespace pianoq {

inline constexpr std::size_t kMaxUploadBytes = 32u * 1024u * 1024u;

struct ScoreReport {
  ProbabilityVector probabilities;
  double expected_score = 0.0;
  std::size_t per_slice_count = 0;
  std::string model_id;
  std::string profile_id;
  std::optional<std::array<double, 3>> register_scores;
};

/// Slices, classifies, averages and scores one clip.
inline ScoreReport score_clip(const LoadedModel& model, const QualityProfile& profile, const AudioClip& clip) {
  const ClipPrediction pred = predict_clip(model.model, clip, model.labels);
  ScoreReport report;
  report.probabilities = pred.probabilities;
  report.per_slice_count = pred.slices_used;
  report.expected_score = expected_score(pred.probabilities, profile);
  report.register_scores = register_scores(pred.probabilities, profile);
  report.model_id = model.model_id;
  report.profile_id = profile.id;
  return report;
}

inline nlohmann::ordered_json to_json(const ScoreReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json probs = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < kNumBrands; ++i) probs[report.probabilities.labels[i]] = report.probabilities.probs[i];
  j["probabilities"] = probs;
  j["expected_score"] = report.expected_score;
  if (report.register_scores) {
    j["register_scores"] = {{"low", (*report.register_scores)[0]},
                            {"middle", (*report.register_scores)[1]},
                            {"high", (*report.register_scores)[2]}};
  }
  j["slices_used"] = report.per_slice_count;
  j["model_id"] = report.model_id;
  j["profile_id"] = report.profile_id;
  return j;
}

/// Serialized ScoreResponse body; the CLI prints exactly these bytes.
inline std::string score_response_body(const ScoreReport& report) { return to_json(report).dump(2) + "\n"; }

inline std::string error_body(std::string_view error, std::string_view detail) {
  nlohmann::ordered_json j;
  j["error"] = error;
  j["detail"] = detail;
  return j.dump() + "\n";
}

struct ServiceOptions {
  bool dev_cors = false;
  std::size_t max_upload_bytes = kMaxUploadBytes;
};

class ScoringService {
 public:
  explicit ScoringService(ServiceOptions options = {}) : options_(options) { install_routes(); }

  ScoringService(const ScoringService&) = delete;
  ScoringService& operator=(const ScoringService&) = delete;

  /// Publishes the model and profile; requests before this see 503.
  void load(LoadedModel model, QualityProfile profile) {
    auto next = std::make_shared<const State>(State{std::move(model), std::move(profile)});
    std::lock_guard lock(mutex_);
    state_ = std::move(next);
  }

  bool ready() const { return snapshot() != nullptr; }

  httplib::Server& server() { return server_; }

  /// Binds to an ephemeral port on host and returns it, or -1.
  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  struct State {
    LoadedModel model;
    QualityProfile profile;
  };

  std::shared_ptr<const State> snapshot() const {
    std::lock_guard lock(mutex_);
    return state_;
  }

  static void send_json(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
  }

  static void send_error(httplib::Response& res, int status, std::string_view error, std::string_view detail) {
    send_json(res, status, error_body(error, detail));
  }

  bool require_ready(httplib::Response& res, std::shared_ptr<const State>& state) const {
    state = snapshot();
    if (!state) send_error(res, 503, "not_ready", "model is still loading");
    return state != nullptr;
  }

  void install_routes() {
    server_.set_payload_max_length(options_.max_upload_bytes);

    server_.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_ptr<const State> state;
      if (!require_ready(res, state)) return;
      nlohmann::ordered_json j;
      j["status"] = "ok";
      j["model_id"] = state->model.model_id;
      send_json(res, 200, j.dump() + "\n");
    });

    server_.Get("/api/pianos", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, nlohmann::json(canonical_labels()).dump() + "\n");
    });

    server_.Get("/api/profile", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_ptr<const State> state;
      if (!require_ready(res, state)) return;
      send_json(res, 200, state->profile.source.dump() + "\n");
    });

    server_.Post("/api/score", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_ptr<const State> state;
      if (!require_ready(res, state)) return;
      if (!req.is_multipart_form_data() || req.files.empty()) {
        send_error(res, 400, "bad_request", "expected a multipart upload with one WAV file");
        return;
      }
      const auto& part = req.files.count("file") ? req.files.find("file")->second : req.files.begin()->second;
      try {
        const auto* data = reinterpret_cast<const std::uint8_t*>(part.content.data());
        AudioClip clip = parse_wav(std::span<const std::uint8_t>(data, part.content.size()), part.filename);
        const ScoreReport report = score_clip(state->model, state->profile, clip);
        send_json(res, 200, score_response_body(report));
      } catch (const Error& e) {
        switch (e.code()) {
          case ErrorCode::TooShort:
            send_error(res, 422, "too_short", e.what());
            break;
          case ErrorCode::UnsupportedFormat:
          case ErrorCode::CorruptHeader:
          case ErrorCode::InvalidRate:
            send_error(res, 400, "bad_audio", e.what());
            break;
          default:
            send_error(res, 500, "internal", e.what());
        }
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    });

    server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      switch (res.status) {
        case 404: send_error(res, 404, "not_found", "no route for " + req.method + " " + req.path); break;
        case 413: send_error(res, 413, "payload_too_large", "uploads are limited to 32 MiB"); break;
        case 400: send_error(res, 400, "bad_request", "malformed request"); break;
        default: send_error(res, res.status, "error", httplib::status_message(res.status)); break;
      }
      return httplib::Server::HandlerResponse::Handled;
    });

    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      std::string detail = "unknown failure";
      try {
        if (ep) std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        detail = e.what();
      } catch (...) {
      }
      send_error(res, 500, "internal", detail);
    });

    if (options_.dev_cors) {
      server_.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      });
      server_.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    }
  }

  ServiceOptions options_;
  httplib::Server server_;
  mutable std::mutex mutex_;
  std::shared_ptr<const State> state_;
};

}  // namespace pianoq
