#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pgada/diffnet.hpp"
#include "pgada/episodes.hpp"

namespace pgada {

struct CiResult {
  double mean = 0.0;
  double halfwidth = 0.0;
};

// Mean and 1.96 * s / sqrt(n) with the n - 1 sample standard deviation; a
// single value gets halfwidth 0. Values are sorted before summation so the
// result does not depend on their order.
CiResult aggregate_ci(std::span<const double> values);

enum class AblationVariant { full, fixed_g, no_noise, no_kl, no_ot, no_ssl, conventional_bn };

std::string_view to_string(AblationVariant v);
AblationVariant parse_variant(std::string_view name);
std::vector<AblationVariant> all_variants();

struct TrainConfig {
  double eta = 1e-3;
  std::size_t batch = 128;
  std::size_t epochs = 20;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double kl_weight = 1.0;
  double epsilon = 1.0;
  double rho = 0.1;
  double tau = 0.5;
  double ssl_jitter = 0.3;
  std::size_t hidden_dim = 16;
  std::size_t embed_dim = 8;
  std::size_t proj_dim = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& c);

struct EpochStats {
  std::size_t epoch = 0;
  LossValues model_step;  // batch means of the model-step losses before each update
  double generator_objective = 0.0;
};

struct TrainResult {
  ModelStack model;
  std::vector<EpochStats> curve;
};

// Model initialisation shared by every trainer so variants start identical.
ModelStack initial_model(const LabeledPool& pool, const TrainConfig& cfg, AblationVariant variant);

// Alternating generator / model updates per batch. Every random draw is keyed
// by (seed, epoch, batch), so training from a checkpoint taken after epoch e
// continues exactly as an uninterrupted run. Epochs [first_epoch, cfg.epochs)
// are run starting from `start`.
TrainResult train_pgada(const LabeledPool& pool, const TrainConfig& cfg, AblationVariant variant);
TrainResult train_pgada(const LabeledPool& pool, const TrainConfig& cfg, AblationVariant variant,
                        ModelStack start, std::size_t first_epoch);

// Cross-entropy only on (phi, theta) with the same batching and init.
TrainResult train_erm(const LabeledPool& pool, const TrainConfig& cfg);

// Evaluation settings implied by a variant on top of a base config.
EvalConfig eval_config_for(AblationVariant variant, EvalConfig base);

double classification_accuracy(const ModelStack& m, const Matrix& x, std::span<const int> y);

struct EpisodeRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  double accuracy = 0.0;
  EpisodeDiagnostics diag;
};

struct RunReport {
  std::string variant;
  double mean_accuracy = 0.0;
  double ci95_halfwidth = 0.0;
  std::size_t episode_count = 0;
  std::vector<EpisodeRecord> episodes;
  nlohmann::json config;
  double wall_clock_seconds = 0.0;
};

// Evaluates the first `count` episodes of `set` on up to `jobs` threads
// (0 = OpenMP default). Results are identical for every job count.
RunReport run_evaluation(const ModelStack& model, const EpisodeSet& set, const EvalConfig& cfg,
                         std::size_t count, int jobs, std::string variant = "full");

nlohmann::json report_to_json(const RunReport& r);
std::string report_to_csv(const RunReport& r);
std::string reports_to_csv(std::span<const RunReport> reports);
std::string format_real(double v);

struct Theorem1Row {
  double sigma = 0.0;
  std::size_t dim = 0;
  std::size_t episodes = 0;
  double mean_sq_error = 0.0;
  double std_error = 0.0;
  double mean_distance = 0.0;
  double predicted = 0.0;  // sqrt(d (sigma_s^2 + sigma_q^2))
};

struct Theorem1Options {
  std::vector<double> sigmas{0.0, 0.2, 0.4};
  std::vector<std::size_t> dims{4, 16};
  std::size_t episodes = 500;
  double beta = 0.5;
  std::size_t n_way = 5;
  std::size_t k_shot = 5;
  std::size_t q_target = 16;
  double class_sep = 4.0;
  double query_offset = 1.0;
  std::uint64_t seed = 0;
  int jobs = 0;
};

// Identity embedding on inputs of each dimension. Every episode is generated
// twice from one stream, clean and with N(0, sigma^2) noise on both sides;
// each is aligned with Sinkhorn + barycentric mapping and the per-row squared
// distance between the two transported supports is averaged.
std::vector<Theorem1Row> verify_theorem1(const Theorem1Options& opt);

struct GaussianPair {
  double mean_s = 0.0;
  double sd_s = 1.0;
  double mean_q = 0.0;
  double sd_q = 1.0;
  double sigma_s = 0.0;
  double sigma_q = 0.0;
};

struct Lemma1Row {
  GaussianPair pair;
  double w_closed = 0.0;
  double w_conv_closed = 0.0;
  double w_empirical = 0.0;
  double w_conv_empirical = 0.0;
  bool left_inequality = false;  // w_conv_closed <= w_closed + 1e-12
  // Candidate right-hand bounds on w_closed (d = 1), reported only.
  double bound_linear = 0.0;  // w_conv + d sigma_s + d sigma_q
  double bound_root = 0.0;    // w_conv + sqrt(d (sigma_s^2 + sigma_q^2))
};

struct Lemma1Options {
  std::vector<GaussianPair> cases;
  std::size_t samples = 4000;
  double beta = 0.99;
  std::uint64_t seed = 0;
};

std::vector<GaussianPair> default_lemma1_cases();
double gaussian_w2(double m1, double s1, double m2, double s2);
std::vector<Lemma1Row> verify_lemma1(const Lemma1Options& opt);

// Within 10% of the closed form, or 0.1 absolute when the closed form is 0.
bool empirical_matches(double empirical, double closed);

struct AblationSetup {
  LabeledPool pool;
  TrainConfig train;
  EpisodeSet episodes;
  EvalConfig eval;
  std::size_t episode_count = 500;
  int jobs = 0;
};

// Trains each distinct training configuration once (no_ot and
// conventional_bn reuse the full model) and evaluates every variant on the
// same episodes.
std::vector<RunReport> run_ablation_suite(const AblationSetup& setup, std::span<const AblationVariant> variants);

}  // namespace pgada
