// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any failed.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "pianoq/classifier.hpp"
#include "pianoq/embedding.hpp"
#include "pianoq/erb.hpp"
#include "pianoq/synth.hpp"
#include "pianoq/service.hpp"
#include "support.hpp"

using namespace pianoq;
namespace ts = testing_support;
namespace fs = std::filesystem;

namespace {

class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 8) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void near(double actual, double expected, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(10);
    s << what << ": got " << actual << ", want " << expected << " +/- " << tol;
    expect(std::abs(actual - expected) <= tol, s.str());
  }
  void note(const std::string& text) { notes_.push_back(text); }

  bool ok() const { return failed_ == 0; }
  std::string summary() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) out += (out.empty() ? "" : "; ") + f;
    if (failed_ > failures_.size()) out += "; ... " + std::to_string(failed_ - failures_.size()) + " more";
    return out;
  }

 private:
  std::vector<std::string> failures_, notes_;
  std::size_t failed_ = 0;
};

int g_failed = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.expect(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_s) c.expect(false, "runtime " + std::to_string(secs) + " s over budget");
  const bool ok = c.ok();
  if (!ok) ++g_failed;
  std::printf("%s  %-22s %7.2fs / %gs  %s\n", ok ? "PASS" : "FAIL", name.c_str(), secs, budget_s,
              c.summary().c_str());
  std::fflush(stdout);
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

void erb_formulas(Check& c) {
  c.expect(erb::erb_moore83(0.0) == 28.52, "moore83(0) != 28.52");
  c.expect(erb::erb_glasberg90(0.0) == 24.7, "glasberg90(0) != 24.7");
  c.expect(rel_diff(erb::erb_glasberg90(1.0), 132.639) <= 1e-9, "glasberg90(1)");
  c.expect(rel_diff(erb::erb_glasberg90(16.0), 1751.724) <= 1e-9, "glasberg90(16)");
  double worst = 0.0;
  for (double f : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double r = rel_diff(erb::erb_moore83(f), erb::erb_glasberg90(f));
    worst = std::max(worst, r);
    c.expect(r <= 0.15, "curves disagree at " + std::to_string(f) + " kHz");
  }
  c.note("max curve disagreement " + std::to_string(worst));
}

void filterbank(Check& c) {
  const auto bank = erb::build_filterbank(44100);
  c.expect(bank.size() == 77, "channel count " + std::to_string(bank.size()));
  c.expect(rel_diff(bank.center_freqs_hz.back(), 16000.0) <= 1e-6, "last center");
  for (std::size_t i = 0; i < bank.size(); ++i) {
    c.expect(bank.bandwidths_hz[i] == erb::erb_glasberg90(bank.center_freqs_hz[i] / 1000.0),
             "bandwidth of channel " + std::to_string(i));
  }
  const double sigma = 0.1;
  const std::size_t frames = 4000;
  const AudioClip noise = ts::white_noise(256 * frames, 44100, 2024, sigma);
  const auto rep = erb::representation(noise, bank, erb::DurationMode::Full);
  c.expect(static_cast<std::size_t>(rep.band_power.rows()) >= 1000, "fewer than 1000 frames");
  double w2 = 0.0;
  for (double w : hann_window(256)) w2 += w * w;
  const double df = 44100.0 / 256.0;
  double worst = 0.0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double expected = sigma * sigma * w2 * bank.bandwidths_hz[i] / df;
    const double ratio = rep.time_mean[static_cast<Eigen::Index>(i)] / expected;
    worst = std::max(worst, std::abs(ratio - 1.0));
    c.expect(std::abs(ratio - 1.0) <= 0.10, "noise power off in channel " + std::to_string(i));
  }
  c.note(std::to_string(rep.band_power.rows()) + " frames, worst deviation " + std::to_string(worst));
}

void focal_contract(Check& c) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double alpha = u(rng);
    const double p = std::max(u(rng), 1e-9);
    c.expect(focal_loss(p, alpha, 0.0) == -alpha * std::log(p), "gamma=0 pair " + std::to_string(i));
  }
  c.near(focal_loss(0.5, 0.5, 0.0), 0.34657, 1e-5, "FL(0.5; 0.5, 0)");
  c.near(focal_loss(0.9, 1.0, 2.0), 0.0010536, 1e-7, "FL(0.9; 1, 2)");
  const std::vector<std::size_t> counts{73, 338, 336, 198, 131, 134, 232};
  const std::vector<double> expected{0.3107, 0.0671, 0.0675, 0.1146, 0.1731, 0.1693, 0.0978};
  const ClassWeights w = compute_alphas(counts);
  double sum = 0.0;
  for (std::size_t i = 0; i < 7; ++i) {
    c.near(w[i], expected[i], 5e-5, "alpha[" + std::to_string(i) + "]");
    sum += w[i];
  }
  c.near(sum, 1.0, 1e-12, "alpha sum");
}

void gradients(Check& c) {
  const FocalLossConfig weighted(compute_alphas(std::vector<std::size_t>{73, 338, 336, 198, 131, 134, 232}), 2.0);
  const FocalLossConfig plain(ClassWeights::uniform(7), 0.0);
  int accepted = 0, redrawn = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; accepted < 5 && seed < 40; ++seed) {
    const MicroCnn model = ts::random_model(1000 + seed);
    const RowMatrix a = ts::random_image(16, 12, 2000 + seed);
    const RowMatrix b = ts::random_image(16, 12, 3000 + seed);
    const std::vector<LabeledImage> batch{{&a, seed % 7}, {&b, (seed + 3) % 7}};
    const auto r = ts::gradient_check(model, batch, accepted % 2 == 0 ? weighted : plain, {}, true);
    if (r.kinks > 0) {
      ++redrawn;
      continue;
    }
    ++accepted;
    worst = std::max(worst, r.max_rel_error);
    c.expect(r.checked == MicroCnn::parameter_count(), "not every parameter checked");
    c.expect(r.max_rel_error < 1e-4, "seed " + std::to_string(seed) + " rel err " + std::to_string(r.max_rel_error));
  }
  c.expect(accepted == 5, "only " + std::to_string(accepted) + " smooth points found");
  std::ostringstream s;
  s << accepted << " points x " << MicroCnn::parameter_count() << " params, max rel err " << worst << ", "
    << redrawn << " redrawn";
  c.note(s.str());
}

void end_to_end(Check& c) {
  DatasetIndex index;
  for (const auto& n : synth::corpus(7)) append_clip(index, n.clip, n.brand);
  assign_splits(index, 42);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.epochs = 30;
  cfg.gamma = 0.0;
  cfg.seed = 42;
  const TrainResult trained = train(index, cfg);
  const Metrics m = evaluate(trained.model, index, Split::Test);
  c.expect(m.accuracy >= 0.95, "test accuracy " + std::to_string(m.accuracy));
  c.expect(std::abs(m.weighted_f1 - m.accuracy) <= 0.005,
           "weighted F1 " + std::to_string(m.weighted_f1) + " vs accuracy " + std::to_string(m.accuracy));
  std::ostringstream s;
  s << index.entries.size() << " slices, " << index.view(Split::Test).size() << " test, acc " << m.accuracy
    << ", F1 " << m.weighted_f1 << ", best epoch " << trained.best_epoch;
  c.note(s.str());
}

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd x(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) x(i, j) = n(rng) * (1.0 + 0.1 * j);
  return x;
}

void embedding_check(Check& c) {
  for (std::uint64_t seed : {10u, 11u, 12u}) {
    const Eigen::MatrixXd x = random_matrix(50, 77, seed);
    const auto e = embedding::pca_2d(x);
    const auto eig = ts::jacobi_eigenvalues(ts::covariance_loops(x));
    for (int k = 0; k < 2; ++k) {
      c.expect(rel_diff(e.projected_variance[k], eig[static_cast<std::size_t>(k)]) <= 1e-8,
               "PCA variance " + std::to_string(k) + " seed " + std::to_string(seed));
    }
    c.expect(e.points == embedding::pca_2d(x).points, "PCA not deterministic");
  }
  std::vector<std::string> labels;
  const Eigen::MatrixXd pts = ts::gaussian_clusters(30, 9, labels);
  embedding::TsneOptions opts;
  opts.seed = 3;
  const auto a = embedding::tsne_2d(pts, opts, labels);
  const auto b = embedding::tsne_2d(pts, opts, labels);
  const double purity = ts::knn_purity(a.points, labels, 5);
  c.expect(purity >= 0.9, "t-SNE 5-NN purity " + std::to_string(purity));
  c.expect(a.points == b.points, "t-SNE not deterministic");
  c.note("t-SNE purity " + std::to_string(purity));
}

void survey_stats(Check& c) {
  const std::vector<double> x{1, 2, 3};
  c.near(pearson_corr(x, x), 1.0, 1e-12, "r(x, x)");
  c.near(pearson_corr(x, std::vector<double>{3, 2, 1}), -1.0, 1e-12, "r(x, reversed)");
  c.near(pearson_corr(x, std::vector<double>{6, 4, 5}), -0.5, 1e-12, "r(x, [6 4 5])");

  SurveyTable random_table;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> r(1, 5);
  for (int p = 0; p < 30; ++p)
    for (std::size_t b = 0; b < kNumBrands; ++b)
      random_table.rows.push_back({"p" + std::to_string(p), std::string(kBrandLabels[b]), {r(rng), r(rng), r(rng), r(rng)}});
  const auto m = correlation_matrix(random_table);
  for (std::size_t i = 0; i < 4; ++i) {
    c.near(m[i][i], 1.0, 1e-12, "diagonal");
    for (std::size_t j = 0; j < 4; ++j) c.expect(m[i][j] == m[j][i], "matrix not symmetric");
  }

  SurveyTable table;
  for (int p = 0; p < 30; ++p) {
    for (std::size_t b = 0; b < kNumBrands; ++b) {
      SurveyRow row{"p" + std::to_string(p), std::string(kBrandLabels[b]), {3, 3, 3, 3}};
      if (kBrandLabels[b] == "Steinway") row.ratings[kOverall] = p < 28 ? 4 : 3;
      if (kBrandLabels[b] == "PearlRiver") row.ratings[kOverall] = p < 18 ? 2 : 3;
      if (kBrandLabels[b] == "Kawai") row.ratings[kLow] = p % 2 == 0 ? 1 : 5;
      table.rows.push_back(row);
    }
  }
  const SurveyAggregate agg = aggregate_survey(table);
  c.expect(agg.participants == 30, "participant count");
  const auto profile = agg.to_profile();
  c.expect(profile.has_value(), "no profile from a complete survey");
  if (profile) {
    c.expect(profile->overall_q[*brand_index("Steinway")] == 118.0 / 30.0, "Steinway mean");
    c.expect(profile->overall_q[*brand_index("PearlRiver")] == 2.4, "PearlRiver mean");
  }
  for (std::size_t i = 0; i < agg.pianos.size(); ++i) {
    if (agg.pianos[i] == "Kawai") c.expect(agg.means[i][kLow] == 3.0, "Kawai low mean");
    if (agg.pianos[i] == "Hsinghai") c.expect(agg.means[i] == (std::array<double, 4>{3, 3, 3, 3}), "Hsinghai means");
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void scoring(Check& c) {
  const QualityProfile profile = load_profile(PIANOQ_PROFILE_PATH);
  ProbabilityVector one_hot;
  one_hot.probs.fill(0.0);
  one_hot.probs[*brand_index("Steinway")] = 1.0;
  c.expect(expected_score(one_hot, profile) == 3.93, "one-hot Steinway score");

  const double lo = *std::min_element(profile.overall_q.begin(), profile.overall_q.end());
  const double hi = *std::max_element(profile.overall_q.begin(), profile.overall_q.end());
  std::mt19937_64 rng(17);
  std::exponential_distribution<double> e(1.0);
  for (int t = 0; t < 10000; ++t) {
    ProbabilityVector p;
    double s = 0.0;
    for (auto& v : p.probs) s += v = e(rng);
    for (auto& v : p.probs) v /= s;
    const double score = expected_score(p, profile);
    c.expect(score >= lo && score <= hi, "score outside [min Q, max Q]");
  }

  ts::TempDir dir("acceptance_score");
  LoadedModel model;
  model.model = ts::random_model(6);
  model.model_id = model_fingerprint(model.model);
  save_checkpoint(dir / "model.pqm", model.model);
  const LoadedModel loaded = load_checkpoint(dir / "model.pqm");

  ScoringService service;
  service.load(loaded, profile);
  const int port = service.bind_any_port();
  std::thread thread([&] { service.listen_after_bind(); });
  service.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(60, 0);

  const std::vector<std::pair<AudioClip, WavEncoding>> fixtures{
      {ts::sine(330, 44100, 0.7), WavEncoding::Pcm16},
      {ts::white_noise(80000, 44100, 3), WavEncoding::Float32},
      {ts::sine(1000, 48000, 1.3), WavEncoding::Pcm16},
  };
  int index = 0;
  for (const auto& [clip, enc] : fixtures) {
    const fs::path wav = dir / ("clip" + std::to_string(index) + ".wav");
    const fs::path out = dir / ("out" + std::to_string(index) + ".json");
    write_wav(wav, clip, enc);
    const std::string cmd = std::string("'") + PIANOQ_CLI_PATH + "' score '" + (dir / "model.pqm").string() + "' '" +
                            wav.string() + "' --profile '" + PIANOQ_PROFILE_PATH + "' > '" + out.string() +
                            "' 2>/dev/null";
    const int status = std::system(cmd.c_str());
    c.expect(status == 0, "CLI score failed on fixture " + std::to_string(index));
    const std::string bytes = slurp(wav);
    const auto res =
        client.Post("/api/score", httplib::MultipartFormDataItems{{"file", bytes, wav.filename().string(), "audio/wav"}});
    c.expect(res && res->status == 200, "HTTP score failed on fixture " + std::to_string(index));
    if (res) c.expect(res->body == slurp(out), "CLI and HTTP bodies differ on fixture " + std::to_string(index));
    ++index;
  }
  service.stop();
  thread.join();
  c.note(std::to_string(index) + " fixtures byte-identical over CLI and HTTP");
}

}  // namespace

int main() {
  criterion("erb-formulas", 1, erb_formulas);
  criterion("filterbank", 30, filterbank);
  criterion("focal-loss-contract", 5, focal_contract);
  criterion("gradient-correctness", 120, gradients);
  criterion("end-to-end-learning", 600, end_to_end);
  criterion("embedding", 60, embedding_check);
  criterion("survey-statistics", 1, survey_stats);
  criterion("scoring", 30, scoring);
  std::printf("%d of 8 criteria failed\n", g_failed);
  return g_failed == 0 ? 0 : 1;
}
