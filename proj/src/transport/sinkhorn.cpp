#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pgada/core_math.hpp"
#include "pgada/error.hpp"
#include "pgada/transport.hpp"

namespace pgada {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kColBlock = 256;

void validate_marginal(std::span<const double> w, const char* name) {
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(std::string("sinkhorn: marginal ") + name + " has a negative or non-finite entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError(std::string("sinkhorn: marginal ") + name + " does not sum to 1");
  }
}

void validate_problem(const Matrix& c, std::span<const double> a, std::span<const double> b,
                      double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("sinkhorn: beta must lie in (0, 1)");
  if (c.rows() != a.size() || c.cols() != b.size()) throw ShapeError("sinkhorn: cost/marginal shape mismatch");
  if (c.empty()) throw ShapeError("sinkhorn: empty cost matrix");
  validate_marginal(a, "a");
  validate_marginal(b, "b");
  require_finite(c, "sinkhorn cost");
}

// Log of sum_j exp((f + g_j - c_j) / lam) using the max as shift.
double exact_lse(double f, const double* g, const double* c, std::size_t m, std::size_t stride,
                 double lam) {
  double mx = kNegInf;
  for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, g[j] - c[j * stride]);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (std::size_t j = 0; j < m; ++j) s += std::exp((g[j] - c[j * stride] - mx) / lam);
  return (f + mx) / lam + std::log(s);
}

// Log-stabilized scaling: dual potentials (f, g) live in the log domain and
// are periodically absorbed into a cached kernel
//   K_ij = exp((f_i + g_j - C_ij) / lam),
// while the inner sweeps update bounded scalings (u, v) with mat-vecs. The
// plan is diag(u) K diag(v). Whenever a scaling leaves [e^-kAbsorb, e^kAbsorb]
// or a kernel row/column underflows, the scalings are absorbed and one exact
// log-sum-exp sweep re-anchors the potentials.
class StabilizedSolver {
 public:
  StabilizedSolver(const Matrix& c, std::span<const double> a, std::span<const double> b)
      : c_(c), a_(a), b_(b), n_(c.rows()), m_(c.cols()), f_(n_, 0.0), g_(m_, 0.0),
        u_(n_, 1.0), v_(m_, 1.0), kv_(n_), ktu_(m_) {
    for (std::size_t i = 0; i < n_; ++i)
      if (a_[i] == 0.0) f_[i] = kNegInf;
    for (std::size_t j = 0; j < m_; ++j)
      if (b_[j] == 0.0) g_[j] = kNegInf;
  }

  // Sweeps at regularization lam until the marginal deviation is below tol or
  // the budget is spent. Returns the sweeps used.
  std::size_t run(double lam, double tol, std::size_t budget) {
    if (budget == 0) return 0;
    reanchor(lam);
    std::size_t it = 1;
    while (true) {
      row_matvec();
      double viol = 0.0;
      for (std::size_t i = 0; i < n_; ++i)
        if (a_[i] > 0.0) viol = std::max(viol, std::abs(u_[i] * kv_[i] - a_[i]));
      if (viol < tol || it >= budget) break;
      bool unstable = false;
      for (std::size_t i = 0; i < n_; ++i) {
        if (a_[i] == 0.0) continue;
        u_[i] = a_[i] / kv_[i];
        unstable |= !in_band(u_[i]);
      }
      col_matvec();
      for (std::size_t j = 0; j < m_; ++j) {
        if (b_[j] == 0.0) continue;
        v_[j] = b_[j] / ktu_[j];
        unstable |= !in_band(v_[j]);
      }
      ++it;
      if (unstable) reanchor(lam);
    }
    return it;
  }

  Matrix take_plan() {
    Matrix plan = std::move(k_);
    const auto n = static_cast<std::ptrdiff_t>(n_);
#pragma omp parallel for schedule(static) if (n_ * m_ > 65536)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      auto row = plan.row(static_cast<std::size_t>(i));
      const double ui = u_[static_cast<std::size_t>(i)];
      for (std::size_t j = 0; j < m_; ++j) row[j] *= ui * v_[j];
    }
    return plan;
  }

 private:
  static constexpr double kAbsorb = 30.0;

  static bool in_band(double s) {
    return std::isfinite(s) && s > std::exp(-kAbsorb) && s < std::exp(kAbsorb);
  }

  // Absorb usable scalings into the potentials, do one exact log-domain sweep
  // and rebuild the kernel for lam.
  void reanchor(double lam) {
    for (std::size_t i = 0; i < n_; ++i)
      if (a_[i] > 0.0 && std::isfinite(u_[i]) && u_[i] > 0.0) f_[i] += lam_ * std::log(u_[i]);
    for (std::size_t j = 0; j < m_; ++j)
      if (b_[j] > 0.0 && std::isfinite(v_[j]) && v_[j] > 0.0) g_[j] += lam_ * std::log(v_[j]);
    lam_ = lam;
    const double* pc = c_.data().data();
    for (std::size_t i = 0; i < n_; ++i)
      if (a_[i] > 0.0) f_[i] = lam * std::log(a_[i]) - lam * exact_lse(0.0, g_.data(), pc + i * m_, m_, 1, lam);
    for (std::size_t j = 0; j < m_; ++j)
      if (b_[j] > 0.0) g_[j] = lam * std::log(b_[j]) - lam * exact_lse(0.0, f_.data(), pc + j, n_, m_, lam);
    std::fill(u_.begin(), u_.end(), 1.0);
    std::fill(v_.begin(), v_.end(), 1.0);
    for (std::size_t i = 0; i < n_; ++i)
      if (a_[i] == 0.0) u_[i] = 0.0;
    for (std::size_t j = 0; j < m_; ++j)
      if (b_[j] == 0.0) v_[j] = 0.0;
    if (k_.rows() != n_ || k_.cols() != m_) k_ = Matrix(n_, m_);
    double* pk = k_.data().data();
    const auto n = static_cast<std::ptrdiff_t>(n_);
#pragma omp parallel for schedule(static) if (n_ * m_ > 65536)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double fi = f_[static_cast<std::size_t>(i)];
      for (std::size_t j = 0; j < m_; ++j) {
        pk[i * m_ + j] = fi == kNegInf ? 0.0 : std::exp((fi + g_[j] - pc[i * m_ + j]) / lam);
      }
    }
  }

  void row_matvec() {
    const double* pk = k_.data().data();
    const auto n = static_cast<std::ptrdiff_t>(n_);
#pragma omp parallel for schedule(static) if (n_ * m_ > 65536)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double* ki = pk + i * m_;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t j = 0; j < m_; ++j) s += ki[j] * v_[j];
      kv_[static_cast<std::size_t>(i)] = s;
    }
  }

  void col_matvec() {
    const double* pk = k_.data().data();
    const auto blocks = static_cast<std::ptrdiff_t>((m_ + kColBlock - 1) / kColBlock);
#pragma omp parallel for schedule(static) if (n_ * m_ > 65536)
    for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
      const std::size_t j0 = static_cast<std::size_t>(blk) * kColBlock;
      const std::size_t j1 = std::min(m_, j0 + kColBlock);
      double acc[kColBlock] = {};
      for (std::size_t i = 0; i < n_; ++i) {
        const double ui = u_[i];
        if (ui == 0.0) continue;
        const double* ki = pk + i * m_;
#pragma omp simd
        for (std::size_t j = j0; j < j1; ++j) acc[j - j0] += ki[j] * ui;
      }
      for (std::size_t j = j0; j < j1; ++j) ktu_[j] = acc[j - j0];
    }
  }

  const Matrix& c_;
  std::span<const double> a_;
  std::span<const double> b_;
  std::size_t n_;
  std::size_t m_;
  Vector f_;
  Vector g_;
  Vector u_;
  Vector v_;
  Vector kv_;
  Vector ktu_;
  Matrix k_;
  double lam_ = 1.0;
};

double inner(const Matrix& p, const Matrix& c) {
  // Row partials summed serially in row order keep the total independent of
  // the thread count.
  Vector partial(p.rows(), 0.0);
  const auto n = static_cast<std::ptrdiff_t>(p.rows());
#pragma omp parallel for schedule(static) if (p.size() > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double s = 0.0;
    auto pr = p.row(static_cast<std::size_t>(i));
    auto cr = c.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < pr.size(); ++j) s += pr[j] * cr[j];
    partial[static_cast<std::size_t>(i)] = s;
  }
  return std::accumulate(partial.begin(), partial.end(), 0.0);
}

TransportPlan finish(Matrix plan, const Matrix& c, std::span<const double> a,
                     std::span<const double> b, double beta, double lam, std::size_t iters,
                     double tol) {
  TransportPlan out;
  out.transport_cost = inner(plan, c);
  out.marginal_violation = marginal_violation(plan, a, b);
  out.converged = out.marginal_violation < tol;
  out.plan = std::move(plan);
  out.a.assign(a.begin(), a.end());
  out.b.assign(b.begin(), b.end());
  out.beta = beta;
  out.regularization = lam;
  out.iterations = iters;
  require_finite(out.plan, "sinkhorn plan");
  return out;
}

}  // namespace

double marginal_violation(const Matrix& plan, std::span<const double> a, std::span<const double> b) {
  if (plan.rows() != a.size() || plan.cols() != b.size()) throw ShapeError("marginal_violation: shape mismatch");
  double worst = 0.0;
  Vector col(plan.cols(), 0.0);
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double r = 0.0;
    auto pr = plan.row(i);
    for (std::size_t j = 0; j < pr.size(); ++j) {
      r += pr[j];
      col[j] += pr[j];
    }
    worst = std::max(worst, std::abs(r - a[i]));
  }
  for (std::size_t j = 0; j < col.size(); ++j) worst = std::max(worst, std::abs(col[j] - b[j]));
  return worst;
}

Vector uniform_marginal(std::size_t n) {
  if (n == 0) throw ShapeError("uniform_marginal: empty support");
  return Vector(n, 1.0 / static_cast<double>(n));
}

double plan_entropy(const Matrix& plan) {
  double h = 0.0;
  for (double p : plan.data())
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

TransportPlan sinkhorn(const Matrix& c, std::span<const double> a, std::span<const double> b,
                       double beta, const SinkhornOptions& opts) {
  validate_problem(c, a, b, beta);
  if (!(opts.tol > 0.0)) throw DomainError("sinkhorn: tol must be > 0");
  const double lam = (1.0 - beta) / beta;
  StabilizedSolver solver(c, a, b);
  std::size_t used = 0;
  if (opts.eps_scaling) {
    const auto [lo, hi] = std::minmax_element(c.data().begin(), c.data().end());
    double stage = std::max(*hi - *lo, lam);
    const double floor_mass = std::min(*std::min_element(a.begin(), a.end()),
                                       *std::min_element(b.begin(), b.end()));
    const double stage_tol = std::max(opts.tol, 1e-2 * std::max(floor_mass, 1e-12));
    while (stage > lam && used < opts.max_iter) {
      used += solver.run(stage, stage_tol, std::min<std::size_t>(50, opts.max_iter - used));
      stage = std::max(stage * 0.5, lam);
    }
  }
  if (used < opts.max_iter) used += solver.run(lam, opts.tol, opts.max_iter - used);
  return finish(solver.take_plan(), c, a, b, beta, lam, used, opts.tol);
}

TransportPlan sinkhorn(const Matrix& c, std::span<const double> a, std::span<const double> b,
                       double beta, double tol, std::size_t max_iter) {
  SinkhornOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return sinkhorn(c, a, b, beta, opts);
}

double wasserstein_estimate(const Matrix& x, const Matrix& y, double beta,
                            const SinkhornOptions& opts) {
  const Matrix c = pairwise_sq_dist(x, y);
  const Vector a = uniform_marginal(x.rows());
  const Vector b = uniform_marginal(y.rows());
  const TransportPlan plan = sinkhorn(c, a, b, beta, opts);
  return std::sqrt(std::max(plan.transport_cost, 0.0));
}

double wasserstein_estimate(const Matrix& x, const Matrix& y, double beta) {
  SinkhornOptions opts;
  opts.tol = 1e-2 / static_cast<double>(std::max<std::size_t>({x.rows(), y.rows(), 1}));
  opts.max_iter = 20000;
  opts.eps_scaling = true;
  return wasserstein_estimate(x, y, beta, opts);
}

namespace reference {

TransportPlan sinkhorn(const Matrix& c, std::span<const double> a, std::span<const double> b,
                       double beta, double tol, std::size_t max_iter) {
  validate_problem(c, a, b, beta);
  const double lam = (1.0 - beta) / beta;
  const std::size_t n = c.rows();
  const std::size_t m = c.cols();
  Vector f(n, 0.0);
  Vector g(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] == 0.0) f[i] = kNegInf;
  for (std::size_t j = 0; j < m; ++j)
    if (b[j] == 0.0) g[j] = kNegInf;

  auto build = [&] {
    Matrix p(n, m);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) p(i, j) = std::exp((f[i] + g[j] - c(i, j)) / lam);
    return p;
  };

  std::size_t it = 0;
  while (it < max_iter) {
    for (std::size_t i = 0; i < n; ++i) {
      if (a[i] == 0.0) continue;
      f[i] = lam * std::log(a[i]) - lam * exact_lse(0.0, g.data(), c.row(i).data(), m, 1, lam);
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (b[j] == 0.0) continue;
      g[j] = lam * std::log(b[j]) - lam * exact_lse(0.0, f.data(), c.data().data() + j, n, m, lam);
    }
    ++it;
    if (marginal_violation(build(), a, b) < tol) break;
  }
  return finish(build(), c, a, b, beta, lam, it, tol);
}

}  // namespace reference

}  // namespace pgada
