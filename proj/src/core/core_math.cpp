#include "pgada/core_math.hpp"

#include <cmath>
#include <string>

#include "pgada/error.hpp"

namespace pgada {

namespace {

void check_dist_shapes(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("pairwise_sq_dist: column mismatch " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()));
  }
}

}  // namespace

Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b) {
  check_dist_shapes(a, b);
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t m = b.rows();
  const std::size_t d = a.cols();
  Matrix out(a.rows(), m);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
#pragma omp parallel for schedule(static) if (a.rows() * m * d > 65536)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double* ai = pa + i * d;
    double* oi = po + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = pb + j * d;
      double s = 0.0;
#pragma omp simd reduction(+ : s)
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = ai[t] - bj[t];
        s += diff * diff;
      }
      oi[j] = s;
    }
  }
  require_finite(out, "pairwise_sq_dist");
  return out;
}

Matrix gaussian_sample(RngStream& rng, double mean, double sigma, std::size_t n, std::size_t d) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("gaussian_sample: sigma must be >= 0");
  if (!std::isfinite(mean)) throw DomainError("gaussian_sample: mean must be finite");
  Matrix out(n, d, mean);
  if (sigma == 0.0) return out;
  for (double& v : out.data()) v = rng.normal(mean, sigma);
  return out;
}

Vector finite_diff_grad(const ScalarFn& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_grad: h must be > 0");
  Vector probe(x.begin(), x.end());
  Vector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(probe);
    probe[i] = orig - h;
    const double fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " + std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

namespace reference {

Matrix pairwise_sq_dist(const Matrix& a, const Matrix& b) {
  check_dist_shapes(a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < a.cols(); ++t) {
        const double diff = a(i, t) - b(j, t);
        s += diff * diff;
      }
      out(i, j) = s;
    }
  }
  return out;
}

}  // namespace reference

}  // namespace pgada
