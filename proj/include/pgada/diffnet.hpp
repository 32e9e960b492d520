#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pgada/matrix.hpp"
#include "pgada/rng.hpp"

namespace pgada {

enum class Activation { tanh, identity };

std::string_view to_string(Activation act);
Activation parse_activation(std::string_view name);

// y = act(x W^T + b); weight is out_dim x in_dim.
struct Layer {
  Matrix weight;
  Vector bias;
  Activation act = Activation::identity;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
};

// Embedding phi, classifier head theta, perturbation generator G and the
// contrastive projection W.
//
// The generator is residual: G(x) = x + delta(x), where delta is the gen layer
// stack with multiplicative noise (1 + rho * N(0, 1)) on every hidden layer's
// output. Each row of delta is then projected radially onto the ball
// ||delta||^2 <= epsilon.
struct ModelStack {
  std::vector<Layer> phi;
  Layer theta;
  std::vector<Layer> gen;
  Matrix proj;  // proj_dim x embed_dim
  double rho = 0.1;
  double epsilon = 1.0;
  double tau = 0.5;

  std::size_t input_dim() const;
  std::size_t embed_dim() const;
  std::size_t num_classes() const;
  // Throws ShapeError/DomainError if layers do not chain or hyperparameters
  // are out of range.
  void validate() const;
};

struct ModelShape {
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 16;
  std::size_t embed_dim = 8;
  std::size_t num_classes = 5;
  std::size_t proj_dim = 8;
};

struct ModelHyper {
  double rho = 0.1;
  double epsilon = 1.0;
  double tau = 0.5;
};

// phi: input -> hidden (tanh) -> embed (identity); theta: embed -> classes;
// gen: input -> input (tanh) -> input (identity). Weights ~ N(0, 1/fan_in),
// biases zero.
ModelStack init_model(const ModelShape& shape, const ModelHyper& hyper, RngStream& rng);

struct LayerGrad {
  Matrix weight;
  Vector bias;
};

struct GradSet {
  std::vector<LayerGrad> phi;
  LayerGrad theta;
  std::vector<LayerGrad> gen;
  Matrix proj;
};

GradSet zero_grads(const ModelStack& m);

struct ParamSelection {
  bool phi = false;
  bool theta = false;
  bool gen = false;
  bool proj = false;

  static ParamSelection all() { return {true, true, true, true}; }
};

Vector flatten_params(const ModelStack& m, ParamSelection sel);
void assign_params(ModelStack& m, std::span<const double> values, ParamSelection sel);
Vector flatten_grads(const GradSet& g, ParamSelection sel);

Matrix forward_embed(const ModelStack& m, const Matrix& x);
Matrix forward_logits(const ModelStack& m, const Matrix& x);

struct LossGrad {
  double loss = 0.0;
  Matrix grad;
};

// Mean over rows of -log softmax(logits)[label].
LossGrad cross_entropy(const Matrix& logits, std::span<const int> labels);

// NT-Xent over 2N rows where rows (2k, 2k+1) form the positive pairs.
LossGrad ntxent_loss(const Matrix& z, double tau);

struct GeneratorNoise {
  std::vector<Matrix> masks;  // one per hidden gen layer
};

GeneratorNoise draw_generator_noise(const ModelStack& m, std::size_t rows, RngStream& rng);
Matrix generator_forward(const ModelStack& m, const Matrix& x, const GeneratorNoise& noise);
Matrix generator_forward(const ModelStack& m, const Matrix& x, RngStream& rng);

struct EmbedDistance {
  double loss = 0.0;
  GradSet grads;  // phi entries populated
  Matrix grad_xp;
};

// Mean over rows of ||phi(xp)_i - phi(x)_i||^2 with gradients for phi and xp.
EmbedDistance embed_distance_loss(const ModelStack& m, const Matrix& x, const Matrix& xp);

void sgd_step(ModelStack& m, const GradSet& g, double eta, ParamSelection sel);

// Per-term weights of the scalar that backward() differentiates:
//   ori  * CE(theta(phi(x)), y)
// + adv  * CE(theta(phi(G(x))), y)
// + self * NT-Xent(W phi(x + jitter_a), W phi(x + jitter_b))
// + dist * mean ||phi(G(x)) - phi(x)||^2
struct LossWeights {
  double ori = 0.0;
  double adv = 0.0;
  double self = 0.0;
  double dist = 0.0;
};

enum class LossSelector { ori, adv, self, embed_distance, generator_objective, combined };

LossSelector parse_loss_selector(std::string_view name);

// combined: ori + lambda1 adv + lambda2 self. generator_objective:
// -dist + kl_weight adv (minimizing it maximizes the distance).
LossWeights weights_for(LossSelector sel, double lambda1 = 1.0, double lambda2 = 1.0,
                        double kl_weight = 1.0);

struct BatchNoise {
  GeneratorNoise gen;
  Matrix jitter_a;
  Matrix jitter_b;
};

BatchNoise draw_batch_noise(const ModelStack& m, std::size_t rows, double ssl_jitter, RngStream& rng);

struct LossValues {
  double ori = 0.0;
  double adv = 0.0;
  double self = 0.0;
  double dist = 0.0;
  double total = 0.0;
};

struct BackwardResult {
  LossValues losses;
  GradSet grads;
};

// Exact gradients of the weighted objective for every parameter tensor.
// Terms with zero weight are evaluated for reporting but not differentiated.
BackwardResult backward(const ModelStack& m, const LossWeights& w, const Matrix& x,
                        std::span<const int> y, const BatchNoise& noise);

}  // namespace pgada
