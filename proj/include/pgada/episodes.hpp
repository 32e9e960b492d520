#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pgada/diffnet.hpp"
#include "pgada/matrix.hpp"
#include "pgada/rng.hpp"

namespace pgada {

// x -> R(scale * x) + offset, where R rotates by `rotation` radians in the
// plane of the first two coordinates. Empty scale/offset mean 1 and 0.
struct SideTransform {
  Vector scale;
  Vector offset;
  double rotation = 0.0;

  bool is_identity() const;
  void validate(std::size_t dim) const;
  Matrix apply(const Matrix& x) const;
};

struct ShiftSpec {
  double support_noise = 0.0;
  double query_noise = 0.0;
  SideTransform support;
  SideTransform query;

  void validate(std::size_t dim) const;
};

// Where class means live. With latent_dim = 0 means are drawn on the sphere
// of radius class_sep in the full input space and rows get isotropic spread.
// With latent_dim > 0 means lie on that sphere inside a fixed latent subspace
// (chosen by world_seed and shared by every task of the world); spread acts
// inside the subspace and nuisance_spread on every coordinate.
struct TaskGeometry {
  std::size_t n_way = 5;
  std::size_t k_shot = 1;
  std::size_t q_target = 8;
  std::size_t input_dim = 16;
  double class_sep = 4.0;
  double spread = 1.0;
  std::size_t latent_dim = 0;
  double nuisance_spread = 0.0;
  std::uint64_t world_seed = 0;

  void validate() const;
};

struct Episode {
  Matrix support_x;
  std::vector<int> support_y;
  Matrix query_x;
  std::vector<int> query_y;
  ShiftSpec shift;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::size_t n_way = 0;
  std::size_t k_shot = 0;
  std::size_t q_target = 0;
};

// Rows are grouped by class: support rows c*K .. c*K+K-1 carry label c.
Episode gen_task(const TaskGeometry& geo, const ShiftSpec& shift, RngStream& rng);
Episode gen_task(std::size_t n_way, std::size_t k_shot, std::size_t q_target, std::size_t p,
                 double class_sep, const ShiftSpec& shift, RngStream& rng);

struct LabeledPool {
  Matrix x;
  std::vector<int> y;
  std::size_t num_classes = 0;
};

// Training pool of `rows` points over `classes` classes of the same world
// (labels cycle 0..classes-1, row order shuffled).
LabeledPool gen_pool(const TaskGeometry& geo, std::size_t classes, std::size_t rows, RngStream& rng);

struct Classification {
  std::vector<int> pred;
  Matrix prob;
};

// Softmax over negative squared distances to class means.
Classification proto_classify(const Matrix& s_emb, std::span<const int> s_y, const Matrix& q_emb);
// Softmax over the per-class maximum cosine similarity.
Classification matching_classify(const Matrix& s_emb, std::span<const int> s_y, const Matrix& q_emb);

enum class Normalization { transductive, conventional, none };
enum class Classifier { proto, matching };

std::string_view to_string(Normalization n);
std::string_view to_string(Classifier c);
Normalization parse_normalization(std::string_view name);
Classifier parse_classifier(std::string_view name);

constexpr double kVarianceFloor = 1e-8;

struct NormalizedPair {
  Matrix support;
  Matrix query;
};

NormalizedPair normalize_features(const Matrix& s_emb, const Matrix& q_emb, Normalization mode);

struct EvalConfig {
  Classifier classifier = Classifier::proto;
  bool use_ot = true;
  double beta = 0.5;
  Normalization normalization = Normalization::transductive;
  double sinkhorn_tol = 1e-9;
  std::size_t sinkhorn_max_iter = 10000;

  void validate() const;
};

struct EpisodeDiagnostics {
  double transport_cost = 0.0;
  double marginal_violation = 0.0;
  double plan_entropy = 0.0;
  std::size_t sinkhorn_iterations = 0;
  bool converged = true;
};

struct EpisodeResult {
  double accuracy = 0.0;
  EpisodeDiagnostics diag;
  Matrix plan;  // empty unless use_ot
};

// Embed, normalize, optionally move the support embeddings onto the query
// embeddings by barycentric mapping of the Sinkhorn plan, then classify.
EpisodeResult evaluate_episode(const Episode& ep, const ModelStack& model, const EvalConfig& cfg);
// Same pipeline on precomputed embeddings.
EpisodeResult evaluate_embeddings(const Matrix& s_emb, std::span<const int> s_y, const Matrix& q_emb,
                                  std::span<const int> q_y, const EvalConfig& cfg);

nlohmann::json shift_to_json(const ShiftSpec& s);
ShiftSpec shift_from_json(const nlohmann::json& j);
nlohmann::json geometry_to_json(const TaskGeometry& g);
TaskGeometry geometry_from_json(const nlohmann::json& j);
nlohmann::json episode_to_json(const Episode& ep);
Episode episode_from_json(const nlohmann::json& j);
nlohmann::json pool_to_json(const LabeledPool& p);
LabeledPool pool_from_json(const nlohmann::json& j);

// An episode set is stored as generation specs (geometry, shift, seed and one
// stream per episode); episodes are regenerated on load.
struct EpisodeSet {
  TaskGeometry geometry;
  ShiftSpec shift;
  std::uint64_t seed = 0;
  std::size_t count = 0;

  Episode episode(std::size_t index) const;
};

nlohmann::json episode_set_to_json(const EpisodeSet& set, bool include_data = false);
EpisodeSet episode_set_from_json(const nlohmann::json& j);

}  // namespace pgada
