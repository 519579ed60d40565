// pianoq command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 input or format error, 3 internal error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pianoq/audio.hpp"
#include "pianoq/checkpoint.hpp"
#include "pianoq/classifier.hpp"
#include "pianoq/csv.hpp"
#include "pianoq/embedding.hpp"
#include "pianoq/erb.hpp"
#include "pianoq/error.hpp"
#include "pianoq/scoring.hpp"
#include "pianoq/service.hpp"
#include "pianoq/spectral.hpp"
#include "pianoq/synth.hpp"

namespace fs = std::filesystem;
using namespace pianoq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

std::ofstream open_out(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot open for writing: " + path.string());
  return out;
}

AudioClip load_working(const fs::path& path) { return resample(load_wav(path), kWorkingRateHz); }

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_wav(const fs::path& p) { return fs::is_regular_file(p) && lower(p.extension().string()) == ".wav"; }

// ---- slice ----

struct SliceArgs {
  std::string wav, out;
  double window = 0.2, hop = 0.2;
  bool pcm16 = false;
};

int run_slice(const SliceArgs& a) {
  const SliceSet set = slice(load_working(a.wav), a.window, a.hop);
  fs::create_directories(a.out);
  for (std::size_t i = 0; i < set.slices.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%03zu.wav", i);
    write_wav(fs::path(a.out) / name, set.slices[i], a.pcm16 ? WavEncoding::Pcm16 : WavEncoding::Float32);
  }
  std::cout << set.slices.size() << " slices written to " << a.out << "\n";
  return kExitOk;
}

// ---- melspec ----

struct MelArgs {
  std::string wav, out, format;
};

int run_melspec(const MelArgs& a) {
  const MelSpectrogram mel = mel_spectrogram(load_working(a.wav));
  std::string format = a.format.empty() ? lower(fs::path(a.out).extension().string()) : "." + lower(a.format);
  if (format == ".pgm") {
    auto out = open_out(a.out, true);
    write_mel_pgm(out, mel);
  } else if (format == ".csv") {
    auto out = open_out(a.out);
    write_mel_csv(out, mel);
  } else {
    throw Error(ErrorCode::InvalidArgument, "output format must be csv or pgm");
  }
  std::cout << mel.values.rows() << " frames x " << mel.n_mels << " bands written to " << a.out << "\n";
  return kExitOk;
}

// ---- erb ----

struct ErbArgs {
  std::string dir, out, duration = "1.2", summary, json, frames;
};

struct ErbInput {
  std::string brand;
  int pitch = 0;
  fs::path path;
};

// Accepts either <dir>/<brand>/<...pitch>.wav or flat <dir>/<brand>_<pitch>.wav.
std::vector<ErbInput> discover_erb_inputs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::FileNotFound, "not a directory: " + dir.string());
  static const std::regex trailing_int(R"((.*?)[_\- ]?(\d+)$)");
  std::vector<ErbInput> found;
  auto add = [&](const std::string& brand, const fs::path& p, int fallback) {
    std::smatch m;
    const std::string stem = p.stem().string();
    const int pitch = std::regex_match(stem, m, trailing_int) ? std::stoi(m[2].str()) : fallback;
    found.push_back({brand, pitch, p});
  };
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& f : fs::directory_iterator(p)) {
        if (is_wav(f.path())) files.push_back(f.path());
      }
      std::sort(files.begin(), files.end());
      for (std::size_t i = 0; i < files.size(); ++i) add(p.filename().string(), files[i], static_cast<int>(i));
    } else if (is_wav(p)) {
      std::smatch m;
      const std::string stem = p.stem().string();
      if (!std::regex_match(stem, m, trailing_int) || m[1].str().empty()) {
        throw Error(ErrorCode::InvalidArgument, "cannot read brand and pitch from '" + p.filename().string() + "'");
      }
      found.push_back({m[1].str(), std::stoi(m[2].str()), p});
    }
  }
  if (found.empty()) throw Error(ErrorCode::EmptyInput, "no WAV files under " + dir.string());
  return found;
}

int run_erb(const ErbArgs& a) {
  const erb::DurationMode mode = erb::parse_duration_mode(a.duration);
  const erb::Filterbank bank = erb::build_filterbank(kWorkingRateHz);
  const auto inputs = discover_erb_inputs(a.dir);

  std::map<std::string, std::map<int, erb::Representation>> by_brand;
  auto out = open_out(a.out);
  out << "brand,pitch,source_id";
  for (int c = 0; c < erb::kChannels; ++c) out << ",erb_" << c;
  out << "\n";
  out.precision(10);

  std::ofstream frames;
  if (!a.frames.empty()) {
    frames = open_out(a.frames);
    frames << "brand,pitch,frame";
    for (int c = 0; c < erb::kChannels; ++c) frames << ",erb_" << c;
    frames << "\n";
    frames.precision(10);
  }

  for (const ErbInput& in : inputs) {
    const AudioClip clip = load_working(in.path);
    erb::Representation rep = erb::representation(clip, bank, mode);
    out << csv::quote(in.brand) << "," << in.pitch << "," << csv::quote(clip.source_id);
    for (Eigen::Index c = 0; c < rep.time_mean.size(); ++c) out << "," << rep.time_mean[c];
    out << "\n";
    if (frames.is_open()) {
      for (Eigen::Index f = 0; f < rep.band_power.rows(); ++f) {
        frames << csv::quote(in.brand) << "," << in.pitch << "," << f;
        for (Eigen::Index c = 0; c < rep.band_power.cols(); ++c) frames << "," << rep.band_power(f, c);
        frames << "\n";
      }
    }
    auto& slot = by_brand[in.brand];
    if (!slot.emplace(in.pitch, std::move(rep)).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate pitch " + std::to_string(in.pitch) + " for " + in.brand);
    }
  }

  std::vector<erb::BrandSummary> summaries;
  for (const auto& [brand, reps] : by_brand) summaries.push_back(erb::summarize_brand(reps, brand));

  if (!a.summary.empty()) {
    auto s = open_out(a.summary);
    s.precision(10);
    s << "brand,pitch,mean_erb\n";
    for (const auto& sum : summaries) {
      for (const auto& [pitch, v] : sum.pitch_curve()) s << csv::quote(sum.brand_label) << "," << pitch << "," << v << "\n";
    }
  }
  if (!a.json.empty()) {
    nlohmann::ordered_json j;
    j["duration"] = erb::to_string(mode);
    j["center_freqs_hz"] = bank.center_freqs_hz;
    j["bandwidths_hz"] = bank.bandwidths_hz;
    auto brands = nlohmann::ordered_json::array();
    for (const auto& sum : summaries) {
      nlohmann::ordered_json b;
      b["brand"] = sum.brand_label;
      auto curve = nlohmann::ordered_json::object();
      for (const auto& [pitch, v] : sum.pitch_curve()) curve[std::to_string(pitch)] = v;
      b["pitch_curve"] = curve;
      b["brand_average"] = std::vector<double>(sum.brand_average.data(), sum.brand_average.data() + sum.brand_average.size());
      brands.push_back(b);
    }
    j["brands"] = brands;
    open_out(a.json) << j.dump(2) << "\n";
  }
  std::cout << inputs.size() << " clips, " << summaries.size() << " brands, duration " << erb::to_string(mode) << "\n";
  return kExitOk;
}

// ---- embed ----

struct EmbedArgs {
  std::string csv, out, method = "pca", label_column = "brand", prefix = "erb_";
  std::uint64_t seed = 0;
  double perplexity = 30.0;
  int iterations = 1000;
};

int run_embed(const EmbedArgs& a) {
  std::ifstream in(a.csv);
  if (!in) throw Error(ErrorCode::FileNotFound, a.csv);
  const csv::Table table = csv::read(in);
  std::vector<std::size_t> features;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (table.header[c].rfind(a.prefix, 0) == 0) features.push_back(c);
  }
  if (features.empty()) throw Error(ErrorCode::CorruptHeader, "no feature columns starting with '" + a.prefix + "'");
  const auto label_col = table.column(a.label_column);

  Eigen::MatrixXd x(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(features.size()));
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < features.size(); ++c) {
      const auto v = csv::parse_double(table.rows[r][features[c]]);
      if (!v) throw Error(ErrorCode::InvalidArgument, "non-numeric feature at row " + std::to_string(r + 1));
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *v;
    }
    labels.push_back(label_col ? table.rows[r][*label_col] : std::string{});
  }

  embedding::Embedding2D emb;
  const std::string method = lower(a.method);
  if (method == "pca") {
    emb = embedding::pca_2d(x, labels);
  } else if (method == "tsne") {
    embedding::TsneOptions opts;
    opts.seed = a.seed;
    opts.perplexity = a.perplexity;
    opts.iterations = a.iterations;
    emb = embedding::tsne_2d(x, opts, labels);
  } else {
    throw Error(ErrorCode::InvalidArgument, "method must be pca or tsne");
  }

  auto out = open_out(a.out);
  out.precision(12);
  out << "x,y,label\n";
  for (Eigen::Index i = 0; i < emb.points.rows(); ++i) {
    out << emb.points(i, 0) << "," << emb.points(i, 1) << "," << csv::quote(emb.labels[static_cast<std::size_t>(i)]) << "\n";
  }
  if (method == "pca") {
    std::cout << "explained variance " << emb.explained_variance[0] << " " << emb.explained_variance[1] << "\n";
  } else {
    std::cout << "t-SNE perplexity " << emb.tsne.perplexity << ", final KL " << emb.tsne.kl_history.back() << "\n";
  }
  return kExitOk;
}

// ---- train / eval ----

struct TrainArgs {
  std::string manifest, out, history;
  double gamma = 0.0, lr = 0.01, momentum = 0.9;
  std::uint64_t seed = 42;
  int epochs = 30;
  std::size_t batch = 32;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  DatasetIndex index = build_index(read_manifest(a.manifest));
  assign_splits(index, a.seed);
  TrainConfig cfg;
  cfg.gamma = a.gamma;
  cfg.seed = a.seed;
  cfg.learning_rate = a.lr;
  cfg.momentum = a.momentum;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  if (!a.quiet) {
    cfg.on_epoch = [](const EpochStats& s) {
      std::cerr << "epoch " << s.epoch << "  train loss " << s.train_loss << " acc " << s.train_accuracy << "  val loss "
                << s.val_loss << " acc " << s.val_accuracy << "\n";
    };
  }
  const TrainResult result = train(index, cfg);

  nlohmann::json meta;
  meta["gamma"] = a.gamma;
  meta["seed"] = a.seed;
  meta["learning_rate"] = a.lr;
  meta["momentum"] = a.momentum;
  meta["batch_size"] = a.batch;
  meta["epochs"] = a.epochs;
  meta["best_epoch"] = result.best_epoch;
  meta["alphas"] = result.alphas.alphas();
  meta["slices"] = index.entries.size();
  save_checkpoint(a.out, result.model, meta);
  if (!a.history.empty()) {
    auto h = open_out(a.history);
    write_history_csv(h, result.history);
  }
  const auto& best = result.history.at(static_cast<std::size_t>(result.best_epoch - 1));
  std::cout << "saved " << model_fingerprint(result.model) << " to " << a.out << " (best epoch " << result.best_epoch
            << ", val accuracy " << best.val_accuracy << ")\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model, manifest, out, split = "test";
  std::uint64_t seed = 42;
};

int run_eval(const EvalArgs& a) {
  const LoadedModel model = load_checkpoint(a.model);
  DatasetIndex index = build_index(read_manifest(a.manifest));
  Metrics m;
  const std::string which = lower(a.split);
  if (which == "all") {
    m = evaluate(model.model, index.all());
  } else {
    assign_splits(index, a.seed);
    const Split s = which == "train" ? Split::Train : which == "val" ? Split::Val : Split::Test;
    if (which != "train" && which != "val" && which != "test") {
      throw Error(ErrorCode::InvalidArgument, "split must be train, val, test or all");
    }
    m = evaluate(model.model, index, s);
  }
  nlohmann::ordered_json j;
  j["model_id"] = model.model_id;
  j["split"] = which;
  j["labels"] = model.labels;
  j["accuracy"] = m.accuracy;
  j["weighted_f1"] = m.weighted_f1;
  j["per_class_f1"] = m.per_class_f1;
  j["support"] = m.support;
  j["confusion"] = m.confusion;
  open_out(a.out) << j.dump(2) << "\n";
  std::cout << "accuracy " << m.accuracy << ", weighted F1 " << m.weighted_f1 << "\n";
  return kExitOk;
}

// ---- score ----

struct ScoreArgs {
  std::string model, wav, profile;
};

int run_score(const ScoreArgs& a) {
  const LoadedModel model = load_checkpoint(a.model);
  const QualityProfile profile = load_profile(a.profile);
  AudioClip clip = parse_wav(read_file_bytes(a.wav), fs::path(a.wav).filename().string());
  std::cout << score_response_body(score_clip(model, profile, clip));
  return kExitOk;
}

// ---- survey ----

struct SurveyArgs {
  std::string ratings, out, profile_out;
};

int run_survey(const SurveyArgs& a) {
  const SurveyAggregate agg = aggregate_survey(load_survey(a.ratings));
  nlohmann::ordered_json j;
  j["participants"] = agg.participants;
  auto pianos = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < agg.pianos.size(); ++i) {
    nlohmann::ordered_json p;
    p["piano"] = agg.pianos[i];
    for (std::size_t k = 0; k < 4; ++k) p[std::string(kRegisterNames[k])] = agg.means[i][k];
    pianos.push_back(p);
  }
  j["means"] = pianos;
  j["registers"] = kRegisterNames;
  try {
    const auto corr = correlation_matrix(agg);
    j["correlation"] = corr;
  } catch (const Error& e) {
    // a single piano or a constant register has no defined correlation
    j["correlation"] = nullptr;
    j["correlation_error"] = e.what();
  }
  open_out(a.out) << j.dump(2) << "\n";

  if (!a.profile_out.empty()) {
    const auto profile = agg.to_profile();
    if (!profile) throw Error(ErrorCode::InvalidArgument, "survey does not cover all seven pianos");
    nlohmann::ordered_json pj;
    pj["version"] = 1;
    pj["id"] = "survey-" + fs::path(a.ratings).stem().string();
    pj["labels"] = profile->labels;
    pj["overall_q"] = profile->overall_q;
    pj["register_q"] = *profile->register_q;
    pj["notes"] = "means of " + std::to_string(agg.participants) + " participants";
    open_out(a.profile_out) << pj.dump(2) << "\n";
  }
  for (std::size_t i = 0; i < agg.pianos.size(); ++i) {
    std::cout << agg.pianos[i] << " overall " << agg.means[i][kOverall] << "\n";
  }
  return kExitOk;
}

// ---- serve ----

struct ServeArgs {
  std::string model, profile, host = "127.0.0.1";
  int port = -1;
  bool dev_cors = false;
};

ScoringService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

int run_serve(const ServeArgs& a) {
  int port = a.port;
  if (port < 0) {
    const char* env = std::getenv("PIANOQ_PORT");
    port = env ? std::atoi(env) : 8080;
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::InvalidArgument, "port out of range");

  // Validate inputs before binding so bad paths fail fast with exit code 2.
  if (!fs::is_regular_file(a.model)) throw Error(ErrorCode::FileNotFound, a.model);
  const QualityProfile profile = load_profile(a.profile);

  ScoringService service(ServiceOptions{a.dev_cors, kMaxUploadBytes});
  if (port == 0) {
    port = service.bind_any_port(a.host);
    if (port < 0) throw Error(ErrorCode::InvalidArgument, "cannot bind " + a.host);
  } else if (!service.bind(a.host, port)) {
    throw Error(ErrorCode::InvalidArgument, "cannot bind " + a.host + ":" + std::to_string(port));
  }
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  std::thread listener([&service] { service.listen_after_bind(); });
  std::cout << "listening on http://" << a.host << ":" << port << std::endl;
  try {
    service.load(load_checkpoint(a.model), profile);
  } catch (...) {
    service.stop();
    listener.join();
    g_service = nullptr;
    throw;
  }
  std::cout << "model loaded" << std::endl;
  listener.join();
  g_service = nullptr;
  return kExitOk;
}

// ---- synth ----

struct SynthArgs {
  std::string out;
  std::uint64_t seed = 7;
  int keys = 88;
};

int run_synth(const SynthArgs& a) {
  fs::create_directories(a.out);
  auto manifest = open_out(fs::path(a.out) / "manifest.csv");
  manifest << "path,label,source_id\n";
  const auto notes = synth::corpus(a.seed, {}, a.keys);
  for (const auto& n : notes) {
    const std::string name = n.clip.source_id + ".wav";
    write_wav(fs::path(a.out) / name, n.clip, WavEncoding::Pcm16);
    manifest << name << "," << kBrandLabels[n.brand] << "," << n.clip.source_id << "\n";
  }
  std::cout << notes.size() << " notes written to " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piano sound-quality analysis and scoring"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  SliceArgs slice_args;
  auto* slice_cmd = app.add_subcommand("slice", "Cut a WAV into fixed-length slices");
  slice_cmd->add_option("wav", slice_args.wav, "Input WAV")->required();
  slice_cmd->add_option("--out", slice_args.out, "Output directory")->required();
  slice_cmd->add_option("--window", slice_args.window, "Window length in seconds")->capture_default_str();
  slice_cmd->add_option("--hop", slice_args.hop, "Hop in seconds")->capture_default_str();
  slice_cmd->add_flag("--pcm16", slice_args.pcm16, "Write 16-bit PCM instead of 32-bit float");

  MelArgs mel_args;
  auto* mel_cmd = app.add_subcommand("melspec", "Export a mel spectrogram as CSV or PGM");
  mel_cmd->add_option("wav", mel_args.wav, "Input WAV")->required();
  mel_cmd->add_option("--out", mel_args.out, "Output file (.csv or .pgm)")->required();
  mel_cmd->add_option("--format", mel_args.format, "csv or pgm; defaults to the output extension")
      ->check(CLI::IsMember({"csv", "pgm"}));

  ErbArgs erb_args;
  auto* erb_cmd = app.add_subcommand("erb", "ERB band representations and brand summaries");
  erb_cmd->add_option("wav-dir", erb_args.dir, "Directory of <brand>/<pitch>.wav or <brand>_<pitch>.wav")->required();
  erb_cmd->add_option("--duration", erb_args.duration, "1.0, 1.2 or full")
      ->check(CLI::IsMember({"1.0", "1.2", "full"}))
      ->capture_default_str();
  erb_cmd->add_option("--out", erb_args.out, "Per-clip CSV (brand, pitch, erb_0..erb_76)")->required();
  erb_cmd->add_option("--summary", erb_args.summary, "Per-brand pitch curve CSV");
  erb_cmd->add_option("--json", erb_args.json, "Filterbank and brand summaries as JSON");
  erb_cmd->add_option("--frames", erb_args.frames, "Per-frame band powers CSV");

  EmbedArgs embed_args;
  auto* embed_cmd = app.add_subcommand("embed", "2-D PCA or t-SNE embedding of a feature CSV");
  embed_cmd->add_option("csv", embed_args.csv, "Feature CSV, e.g. the output of erb")->required();
  embed_cmd->add_option("--method", embed_args.method, "pca or tsne")
      ->check(CLI::IsMember({"pca", "tsne"}))
      ->capture_default_str();
  embed_cmd->add_option("--seed", embed_args.seed, "t-SNE seed")->capture_default_str();
  embed_cmd->add_option("--perplexity", embed_args.perplexity, "t-SNE perplexity")->capture_default_str();
  embed_cmd->add_option("--iterations", embed_args.iterations, "t-SNE iterations")->capture_default_str();
  embed_cmd->add_option("--label-column", embed_args.label_column, "Column carried through as the label")->capture_default_str();
  embed_cmd->add_option("--prefix", embed_args.prefix, "Prefix of feature columns")->capture_default_str();
  embed_cmd->add_option("--out", embed_args.out, "Output CSV (x, y, label)")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train the classifier from a manifest");
  train_cmd->add_option("manifest", train_args.manifest, "CSV with path,label,source_id")->required();
  train_cmd->add_option("--gamma", train_args.gamma, "Focal loss gamma")->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed, "Split, init and shuffle seed")->capture_default_str();
  train_cmd->add_option("--epochs", train_args.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--lr", train_args.lr, "Learning rate")->capture_default_str();
  train_cmd->add_option("--momentum", train_args.momentum, "SGD momentum")->capture_default_str();
  train_cmd->add_option("--batch", train_args.batch, "Batch size")->capture_default_str();
  train_cmd->add_option("--history", train_args.history, "Per-epoch history CSV");
  train_cmd->add_flag("--quiet", train_args.quiet, "No per-epoch progress");
  train_cmd->add_option("--out", train_args.out, "Output checkpoint (.pqm)")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy, weighted F1 and confusion matrix");
  eval_cmd->add_option("model", eval_args.model, "Checkpoint (.pqm)")->required();
  eval_cmd->add_option("manifest", eval_args.manifest, "CSV with path,label,source_id")->required();
  eval_cmd->add_option("--split", eval_args.split, "train, val, test or all")
      ->check(CLI::IsMember({"train", "val", "test", "all"}))
      ->capture_default_str();
  eval_cmd->add_option("--seed", eval_args.seed, "Seed used for the split at training time")->capture_default_str();
  eval_cmd->add_option("--out", eval_args.out, "Metrics JSON")->required();

  ScoreArgs score_args;
  auto* score_cmd = app.add_subcommand("score", "Score one recording; prints JSON");
  score_cmd->add_option("model", score_args.model, "Checkpoint (.pqm)")->required();
  score_cmd->add_option("wav", score_args.wav, "Recording")->required();
  score_cmd->add_option("--profile", score_args.profile, "Quality profile JSON")->required();

  SurveyArgs survey_args;
  auto* survey_cmd = app.add_subcommand("survey", "Survey means and register correlations");
  survey_cmd->add_option("ratings", survey_args.ratings, "CSV participant,piano,low,middle,high,overall")->required();
  survey_cmd->add_option("--out", survey_args.out, "Statistics JSON")->required();
  survey_cmd->add_option("--profile-out", survey_args.profile_out, "Also write a quality profile");

  ServeArgs serve_args;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP scoring service");
  serve_cmd->add_option("--model", serve_args.model, "Checkpoint (.pqm)")->required();
  serve_cmd->add_option("--profile", serve_args.profile, "Quality profile JSON")->required();
  serve_cmd->add_option("--port", serve_args.port, "Port; overrides PIANOQ_PORT (default 8080, 0 = any)");
  serve_cmd->add_option("--host", serve_args.host, "Bind address")->capture_default_str();
  serve_cmd->add_flag("--dev-cors", serve_args.dev_cors, "Send permissive CORS headers");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic seven-brand corpus and a manifest");
  synth_cmd->add_option("--out", synth_args.out, "Output directory")->required();
  synth_cmd->add_option("--seed", synth_args.seed, "Corpus seed")->capture_default_str();
  synth_cmd->add_option("--keys", synth_args.keys, "Notes per brand")->capture_default_str()->check(CLI::Range(1, 88));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "pianoq: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*slice_cmd) return run_slice(slice_args);
    if (*mel_cmd) return run_melspec(mel_args);
    if (*erb_cmd) return run_erb(erb_args);
    if (*embed_cmd) return run_embed(embed_args);
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*score_cmd) return run_score(score_args);
    if (*survey_cmd) return run_survey(survey_args);
    if (*serve_cmd) return run_serve(serve_args);
    if (*synth_cmd) return run_synth(synth_args);
  } catch (const Error& e) {
    std::cerr << "pianoq: " << e.what() << "\n";
    return is_input_error(e.code()) ? kExitInput : kExitInternal;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "pianoq: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "pianoq: internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
