#pragma once

#include <cstddef>
#include <span>

#include "pgada/matrix.hpp"

namespace pgada {

struct TransportPlan {
  Matrix plan;             // n x m coupling, total mass 1
  Vector a;                // source marginal
  Vector b;                // target marginal
  double transport_cost = 0.0;  // <plan, C>
  double beta = 0.0;
  double regularization = 0.0;  // lambda = (1 - beta) / beta
  std::size_t iterations = 0;
  bool converged = false;
  double marginal_violation = 0.0;
};

struct SinkhornOptions {
  double tol = 1e-9;
  std::size_t max_iter = 10000;
  // Anneal the regularization from the cost scale down to the target value,
  // warm-starting the potentials. Only changes the iteration path, not the
  // fixed point.
  bool eps_scaling = false;
};

// Entropic OT for  min_pi  beta <pi, C> + (1 - beta) sum pi log pi  over
// couplings of (a, b), solved as <pi, C> + lambda sum pi log pi with
// lambda = (1 - beta) / beta using log-domain updates.
//
// Stops once the largest marginal deviation drops below tol or after max_iter
// sweeps; `converged` reports which. beta must lie in (0, 1); pure OT goes
// through exact_ot_small.
TransportPlan sinkhorn(const Matrix& c, std::span<const double> a, std::span<const double> b,
                       double beta, const SinkhornOptions& opts = {});
TransportPlan sinkhorn(const Matrix& c, std::span<const double> a, std::span<const double> b,
                       double beta, double tol, std::size_t max_iter);

struct ExactTransport {
  double cost = 0.0;
  Matrix plan;
};

// Exact minimizer of <pi, C> over couplings of (a, b) by successive shortest
// paths on the bipartite transportation network. Intended as a test oracle:
// instances are limited to n * m <= 64.
ExactTransport exact_ot_small(const Matrix& c, std::span<const double> a, std::span<const double> b);

// out_i = sum_j plan_ij q_j / sum_j plan_ij.
Matrix barycentric_map(const Matrix& plan, const Matrix& q_emb);
Matrix barycentric_map(const TransportPlan& plan, const Matrix& q_emb);

// sqrt of the Sinkhorn transport cost between the empirical measures of x and
// y under squared Euclidean ground cost. The default solve uses eps-scaling
// and stops at a marginal deviation of 1% of a single sample's mass.
double wasserstein_estimate(const Matrix& x, const Matrix& y, double beta);
double wasserstein_estimate(const Matrix& x, const Matrix& y, double beta,
                            const SinkhornOptions& opts);

// -sum pi log pi with 0 log 0 = 0.
double plan_entropy(const Matrix& plan);

Vector uniform_marginal(std::size_t n);

// Largest |row sum - a_i| or |col sum - b_j|.
double marginal_violation(const Matrix& plan, std::span<const double> a, std::span<const double> b);

namespace reference {

// Plain two-pass log-sum-exp Sinkhorn without shifting tricks or threading.
TransportPlan sinkhorn(const Matrix& c, std::span<const double> a, std::span<const double> b,
                       double beta, double tol, std::size_t max_iter);

}  // namespace reference

}  // namespace pgada
