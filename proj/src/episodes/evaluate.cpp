#include <cmath>
#include <string>

#include "pgada/core_math.hpp"
#include "pgada/episodes.hpp"
#include "pgada/error.hpp"
#include "pgada/transport.hpp"

namespace pgada {

namespace {

void standardize(Matrix& x, const Vector& mean, const Vector& inv_sd) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t t = 0; t < r.size(); ++t) r[t] = (r[t] - mean[t]) * inv_sd[t];
  }
}

}  // namespace

NormalizedPair normalize_features(const Matrix& s_emb, const Matrix& q_emb, Normalization mode) {
  if (s_emb.cols() != q_emb.cols()) throw ShapeError("normalize_features: column counts differ");
  NormalizedPair out{s_emb, q_emb};
  if (mode == Normalization::none) return out;
  const std::size_t d = s_emb.cols();
  Vector mean(d, 0.0);
  Vector var(d, 0.0);
  std::size_t count = 0;
  auto accumulate = [&](const Matrix& x, auto&& fn) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto r = x.row(i);
      for (std::size_t t = 0; t < d; ++t) fn(t, r[t]);
    }
  };
  const bool pooled = mode == Normalization::transductive;
  accumulate(s_emb, [&](std::size_t t, double v) { mean[t] += v; });
  count = s_emb.rows();
  if (pooled) {
    accumulate(q_emb, [&](std::size_t t, double v) { mean[t] += v; });
    count += q_emb.rows();
  }
  if (count == 0) throw ShapeError("normalize_features: no rows to estimate statistics");
  for (double& m : mean) m /= static_cast<double>(count);
  accumulate(s_emb, [&](std::size_t t, double v) { var[t] += (v - mean[t]) * (v - mean[t]); });
  if (pooled) accumulate(q_emb, [&](std::size_t t, double v) { var[t] += (v - mean[t]) * (v - mean[t]); });
  Vector inv_sd(d);
  for (std::size_t t = 0; t < d; ++t) {
    inv_sd[t] = 1.0 / std::sqrt(std::max(var[t] / static_cast<double>(count), kVarianceFloor));
  }
  standardize(out.support, mean, inv_sd);
  standardize(out.query, mean, inv_sd);
  return out;
}

void EvalConfig::validate() const {
  if (use_ot && !(beta > 0.0 && beta < 1.0)) throw DomainError("beta must lie in (0, 1) when OT is enabled");
  if (!(sinkhorn_tol > 0.0)) throw DomainError("sinkhorn_tol must be > 0");
  if (sinkhorn_max_iter == 0) throw DomainError("sinkhorn_max_iter must be >= 1");
}

EpisodeResult evaluate_embeddings(const Matrix& s_emb, std::span<const int> s_y, const Matrix& q_emb,
                                  std::span<const int> q_y, const EvalConfig& cfg) {
  cfg.validate();
  if (q_y.size() != q_emb.rows()) throw ShapeError("evaluate: query label count != query rows");
  if (q_emb.rows() == 0) throw ShapeError("evaluate: empty query set");
  NormalizedPair feats = normalize_features(s_emb, q_emb, cfg.normalization);
  EpisodeResult res;
  if (cfg.use_ot) {
    const Matrix c = pairwise_sq_dist(feats.support, feats.query);
    const Vector a = uniform_marginal(c.rows());
    const Vector b = uniform_marginal(c.cols());
    TransportPlan tp = sinkhorn(c, a, b, cfg.beta, cfg.sinkhorn_tol, cfg.sinkhorn_max_iter);
    res.diag.transport_cost = tp.transport_cost;
    res.diag.marginal_violation = tp.marginal_violation;
    res.diag.plan_entropy = plan_entropy(tp.plan);
    res.diag.sinkhorn_iterations = tp.iterations;
    res.diag.converged = tp.converged;
    feats.support = barycentric_map(tp, feats.query);
    res.plan = std::move(tp.plan);
  }
  const Classification cls = cfg.classifier == Classifier::proto
                                 ? proto_classify(feats.support, s_y, feats.query)
                                 : matching_classify(feats.support, s_y, feats.query);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < q_y.size(); ++i) hits += cls.pred[i] == q_y[i] ? 1 : 0;
  res.accuracy = static_cast<double>(hits) / static_cast<double>(q_y.size());
  return res;
}

EpisodeResult evaluate_episode(const Episode& ep, const ModelStack& model, const EvalConfig& cfg) {
  if (ep.support_x.cols() != model.input_dim() || ep.query_x.cols() != model.input_dim()) {
    throw ShapeError("evaluate_episode: episode has " + std::to_string(ep.support_x.cols()) +
                     " input dims, model expects " + std::to_string(model.input_dim()));
  }
  return evaluate_embeddings(forward_embed(model, ep.support_x), ep.support_y, forward_embed(model, ep.query_x),
                             ep.query_y, cfg);
}

}  // namespace pgada
