#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pgada/diffnet.hpp"
#include "pgada/error.hpp"

namespace pgada {

LossGrad cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows();
  const std::size_t classes = logits.cols();
  if (labels.size() != n) throw ShapeError("cross_entropy: label count != logit rows");
  if (n == 0) throw ShapeError("cross_entropy: empty batch");
  LossGrad out{0.0, Matrix(n, classes)};
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DomainError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    out.loss += (log_z - row[static_cast<std::size_t>(y)]) * inv_n;
    auto g = out.grad.row(i);
    for (std::size_t c = 0; c < classes; ++c) g[c] = std::exp(row[c] - log_z) * inv_n;
    g[static_cast<std::size_t>(y)] -= inv_n;
  }
  return out;
}

LossGrad ntxent_loss(const Matrix& z, double tau) {
  const std::size_t rows = z.rows();
  if (rows < 2 || rows % 2 != 0) throw ShapeError("ntxent_loss: row count must be even and >= 2");
  if (!(tau > 0.0)) throw DomainError("ntxent_loss: tau must be > 0");
  const std::size_t d = z.cols();

  Matrix u(rows, d);
  Vector norm(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (double v : z.row(i)) s += v * v;
    norm[i] = std::sqrt(s);
    if (!std::isfinite(norm[i])) throw NumericError("ntxent_loss: non-finite row " + std::to_string(i));
    if (norm[i] == 0.0) throw DomainError("ntxent_loss: zero-norm row " + std::to_string(i));
    for (std::size_t t = 0; t < d; ++t) u(i, t) = z(i, t) / norm[i];
  }
  Matrix sim = matmul_transb(u, u);
  for (double& v : sim.data()) v /= tau;

  // coef(i, k) = dL/dsim(i, k)
  Matrix coef(rows, rows);
  const double inv = 1.0 / static_cast<double>(rows);
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t pos = i ^ 1U;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rows; ++k)
      if (k != i) mx = std::max(mx, sim(i, k));
    double denom = 0.0;
    for (std::size_t k = 0; k < rows; ++k)
      if (k != i) denom += std::exp(sim(i, k) - mx);
    const double log_denom = mx + std::log(denom);
    loss += (log_denom - sim(i, pos)) * inv;
    for (std::size_t k = 0; k < rows; ++k) {
      if (k == i) continue;
      coef(i, k) = std::exp(sim(i, k) - log_denom) * inv;
    }
    coef(i, pos) -= inv;
  }

  // sim is symmetric in (i, k), so u_i receives coef(i, k) + coef(k, i).
  Matrix grad_u(rows, d);
  for (std::size_t i = 0; i < rows; ++i) {
    auto gi = grad_u.row(i);
    for (std::size_t k = 0; k < rows; ++k) {
      if (k == i) continue;
      const double w = (coef(i, k) + coef(k, i)) / tau;
      auto uk = u.row(k);
      for (std::size_t t = 0; t < d; ++t) gi[t] += w * uk[t];
    }
  }
  LossGrad out{loss, Matrix(rows, d)};
  for (std::size_t i = 0; i < rows; ++i) {
    auto ui = u.row(i);
    auto gi = grad_u.row(i);
    double proj = 0.0;
    for (std::size_t t = 0; t < d; ++t) proj += ui[t] * gi[t];
    for (std::size_t t = 0; t < d; ++t) out.grad(i, t) = (gi[t] - ui[t] * proj) / norm[i];
  }
  return out;
}

}  // namespace pgada
