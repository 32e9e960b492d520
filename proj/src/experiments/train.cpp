#include <cmath>
#include <numeric>
#include <string>

#include "pgada/error.hpp"
#include "pgada/experiments.hpp"

namespace pgada {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974ULL;
constexpr std::uint64_t kOrderStream = 0x6f726465ULL;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973ULL;
constexpr std::uint64_t kGeneratorStep = 1;
constexpr std::uint64_t kModelStep = 2;

std::vector<std::size_t> epoch_order(std::size_t rows, std::uint64_t seed, std::size_t epoch) {
  RngStream rng = RngStream(seed, kOrderStream).derive(epoch);
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = rows; i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
  return order;
}

RngStream step_stream(std::uint64_t seed, std::size_t epoch, std::size_t batch, std::uint64_t purpose) {
  return RngStream(seed, kNoiseStream).derive(epoch).derive(batch).derive(purpose);
}

struct Batch {
  Matrix x;
  std::vector<int> y;
};

std::vector<Batch> make_batches(const LabeledPool& pool, const TrainConfig& cfg, std::size_t epoch) {
  const std::vector<std::size_t> order = epoch_order(pool.x.rows(), cfg.seed, epoch);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
    const std::size_t end = std::min(order.size(), start + cfg.batch);
    if (end - start < 2) break;
    Batch b;
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
    b.x = select_rows(pool.x, idx);
    for (std::size_t i : idx) b.y.push_back(pool.y[i]);
    out.push_back(std::move(b));
  }
  return out;
}

void check_pool(const LabeledPool& pool, const TrainConfig& cfg) {
  cfg.validate();
  if (pool.num_classes < 2) throw DomainError("training pool needs at least 2 classes");
  if (pool.x.rows() < cfg.batch) {
    throw DomainError("training pool has " + std::to_string(pool.x.rows()) + " rows, fewer than batch " +
                      std::to_string(cfg.batch));
  }
  if (pool.y.size() != pool.x.rows()) throw ShapeError("training pool label count != rows");
  std::vector<bool> seen(pool.num_classes, false);
  for (int y : pool.y) {
    if (y < 0 || static_cast<std::size_t>(y) >= pool.num_classes) throw DomainError("training pool label out of range");
    seen[static_cast<std::size_t>(y)] = true;
  }
  std::size_t present = 0;
  for (bool s : seen) present += s ? 1 : 0;
  if (present < 2) throw DomainError("training pool has fewer than 2 populated classes");
}

void add_losses(LossValues& acc, const LossValues& v, double w) {
  acc.ori += w * v.ori;
  acc.adv += w * v.adv;
  acc.self += w * v.self;
  acc.dist += w * v.dist;
  acc.total += w * v.total;
}

void require_finite_params(const ModelStack& m, std::size_t epoch) {
  for (double v : flatten_params(m, ParamSelection::all())) {
    if (!std::isfinite(v)) throw NumericError("training diverged in epoch " + std::to_string(epoch));
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw DomainError("eta must be > 0");
  if (batch < 2) throw DomainError("batch must be >= 2");
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw DomainError("lambda1 and lambda2 must be >= 0");
  if (!(kl_weight >= 0.0)) throw DomainError("kl_weight must be >= 0");
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be > 0");
  if (!(rho >= 0.0)) throw DomainError("rho must be >= 0");
  if (!(tau > 0.0)) throw DomainError("tau must be > 0");
  if (!(ssl_jitter >= 0.0)) throw DomainError("ssl_jitter must be >= 0");
  if (hidden_dim == 0 || embed_dim == 0 || proj_dim == 0) throw DomainError("model dimensions must be >= 1");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"eta", c.eta},
                        {"batch", c.batch},
                        {"epochs", c.epochs},
                        {"lambda1", c.lambda1},
                        {"lambda2", c.lambda2},
                        {"kl_weight", c.kl_weight},
                        {"epsilon", c.epsilon},
                        {"rho", c.rho},
                        {"tau", c.tau},
                        {"ssl_jitter", c.ssl_jitter},
                        {"hidden_dim", c.hidden_dim},
                        {"embed_dim", c.embed_dim},
                        {"proj_dim", c.proj_dim},
                        {"seed", c.seed}};
}

ModelStack initial_model(const LabeledPool& pool, const TrainConfig& cfg, AblationVariant variant) {
  cfg.validate();
  ModelShape shape;
  shape.input_dim = pool.x.cols();
  shape.hidden_dim = cfg.hidden_dim;
  shape.embed_dim = cfg.embed_dim;
  shape.num_classes = pool.num_classes;
  shape.proj_dim = cfg.proj_dim;
  ModelHyper hyper;
  hyper.rho = variant == AblationVariant::no_noise ? 0.0 : cfg.rho;
  hyper.epsilon = cfg.epsilon;
  hyper.tau = cfg.tau;
  RngStream rng(cfg.seed, kInitStream);
  return init_model(shape, hyper, rng);
}

TrainResult train_pgada(const LabeledPool& pool, const TrainConfig& cfg, AblationVariant variant) {
  return train_pgada(pool, cfg, variant, initial_model(pool, cfg, variant), 0);
}

TrainResult train_pgada(const LabeledPool& pool, const TrainConfig& cfg, AblationVariant variant,
                        ModelStack start, std::size_t first_epoch) {
  check_pool(pool, cfg);
  start.validate();
  if (start.input_dim() != pool.x.cols()) throw ShapeError("model input dim does not match the pool");
  if (start.num_classes() != pool.num_classes) throw ShapeError("model class count does not match the pool");
  if (variant == AblationVariant::no_noise) start.rho = 0.0;

  const bool train_generator = variant != AblationVariant::fixed_g;
  const double kl = variant == AblationVariant::no_kl ? 0.0 : cfg.kl_weight;
  const double lambda2 = variant == AblationVariant::no_ssl ? 0.0 : cfg.lambda2;
  const LossWeights gen_w = weights_for(LossSelector::generator_objective, cfg.lambda1, lambda2, kl);
  const LossWeights model_w = weights_for(LossSelector::combined, cfg.lambda1, lambda2, kl);
  const ParamSelection gen_sel{false, false, true, false};
  const ParamSelection model_sel{true, true, false, true};

  TrainResult res;
  res.model = std::move(start);
  ModelStack& m = res.model;
  for (std::size_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    const std::vector<Batch> batches = make_batches(pool, cfg, epoch);
    EpochStats stats;
    stats.epoch = epoch;
    const double w = 1.0 / static_cast<double>(batches.size());
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& b = batches[bi];
      if (train_generator) {
        RngStream rng = step_stream(cfg.seed, epoch, bi, kGeneratorStep);
        const BatchNoise noise = draw_batch_noise(m, b.x.rows(), cfg.ssl_jitter, rng);
        const BackwardResult g = backward(m, gen_w, b.x, b.y, noise);
        stats.generator_objective += w * g.losses.total;
        sgd_step(m, g.grads, cfg.eta, gen_sel);
        require_finite_params(m, epoch);
      }
      RngStream rng = step_stream(cfg.seed, epoch, bi, kModelStep);
      const BatchNoise noise = draw_batch_noise(m, b.x.rows(), cfg.ssl_jitter, rng);
      const BackwardResult r = backward(m, model_w, b.x, b.y, noise);
      add_losses(stats.model_step, r.losses, w);
      sgd_step(m, r.grads, cfg.eta, model_sel);
      require_finite_params(m, epoch);
    }
    if (!std::isfinite(stats.model_step.total)) {
      throw NumericError("training diverged in epoch " + std::to_string(epoch));
    }
    res.curve.push_back(stats);
  }
  return res;
}

TrainResult train_erm(const LabeledPool& pool, const TrainConfig& cfg) {
  check_pool(pool, cfg);
  TrainResult res;
  res.model = initial_model(pool, cfg, AblationVariant::full);
  ModelStack& m = res.model;
  const LossWeights w_ori = weights_for(LossSelector::ori);
  const ParamSelection sel{true, true, false, false};
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<Batch> batches = make_batches(pool, cfg, epoch);
    EpochStats stats;
    stats.epoch = epoch;
    const double w = 1.0 / static_cast<double>(batches.size());
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch& b = batches[bi];
      RngStream rng = step_stream(cfg.seed, epoch, bi, kModelStep);
      const BatchNoise noise = draw_batch_noise(m, b.x.rows(), cfg.ssl_jitter, rng);
      const BackwardResult r = backward(m, w_ori, b.x, b.y, noise);
      add_losses(stats.model_step, r.losses, w);
      sgd_step(m, r.grads, cfg.eta, sel);
      require_finite_params(m, epoch);
    }
    if (!std::isfinite(stats.model_step.total)) {
      throw NumericError("training diverged in epoch " + std::to_string(epoch));
    }
    res.curve.push_back(stats);
  }
  return res;
}

double classification_accuracy(const ModelStack& m, const Matrix& x, std::span<const int> y) {
  if (y.size() != x.rows()) throw ShapeError("classification_accuracy: label count != rows");
  if (y.empty()) throw ShapeError("classification_accuracy: empty input");
  const Matrix logits = forward_logits(m, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto r = logits.row(i);
    const auto best = std::max_element(r.begin(), r.end()) - r.begin();
    hits += best == y[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

std::string_view to_string(AblationVariant v) {
  switch (v) {
    case AblationVariant::full: return "full";
    case AblationVariant::fixed_g: return "fixed_g";
    case AblationVariant::no_noise: return "no_noise";
    case AblationVariant::no_kl: return "no_kl";
    case AblationVariant::no_ot: return "no_ot";
    case AblationVariant::no_ssl: return "no_ssl";
    case AblationVariant::conventional_bn: return "conventional_bn";
  }
  return "full";
}

AblationVariant parse_variant(std::string_view name) {
  for (AblationVariant v : all_variants())
    if (to_string(v) == name) return v;
  throw UsageError("unknown ablation variant '" + std::string(name) + "'");
}

std::vector<AblationVariant> all_variants() {
  return {AblationVariant::full,  AblationVariant::fixed_g, AblationVariant::no_noise,
          AblationVariant::no_kl, AblationVariant::no_ot,   AblationVariant::no_ssl,
          AblationVariant::conventional_bn};
}

EvalConfig eval_config_for(AblationVariant variant, EvalConfig base) {
  if (variant == AblationVariant::no_ot) base.use_ot = false;
  if (variant == AblationVariant::conventional_bn) base.normalization = Normalization::conventional;
  return base;
}

}  // namespace pgada
