#include <cmath>
#include <exception>

#include <omp.h>

#include "pgada/core_math.hpp"
#include "pgada/error.hpp"
#include "pgada/experiments.hpp"
#include "pgada/transport.hpp"

namespace pgada {

namespace {

Matrix transported_support(const Episode& ep, double beta) {
  const Matrix c = pairwise_sq_dist(ep.support_x, ep.query_x);
  SinkhornOptions opts;
  opts.tol = 1e-6;
  opts.max_iter = 100000;
  opts.eps_scaling = true;
  const TransportPlan tp = sinkhorn(c, uniform_marginal(c.rows()), uniform_marginal(c.cols()), beta, opts);
  if (!tp.converged) throw NumericError("verify_theorem1: Sinkhorn did not converge");
  return barycentric_map(tp, ep.query_x);
}

}  // namespace

std::vector<Theorem1Row> verify_theorem1(const Theorem1Options& opt) {
  if (opt.episodes < 100) throw DomainError("verify_theorem1: need at least 100 episodes");
  if (!(opt.beta > 0.0 && opt.beta < 1.0)) throw DomainError("verify_theorem1: beta must lie in (0, 1)");
  std::vector<Theorem1Row> rows;
  for (std::size_t d : opt.dims) {
    TaskGeometry geo;
    geo.n_way = opt.n_way;
    geo.k_shot = opt.k_shot;
    geo.q_target = opt.q_target;
    geo.input_dim = d;
    geo.class_sep = opt.class_sep;
    ShiftSpec clean;
    clean.query.offset.assign(d, opt.query_offset);
    for (double sigma : opt.sigmas) {
      if (!(sigma >= 0.0)) throw DomainError("verify_theorem1: sigma must be >= 0");
      ShiftSpec noisy = clean;
      noisy.support_noise = sigma;
      noisy.query_noise = sigma;
      std::vector<double> sq(opt.episodes);
      std::vector<double> dist(opt.episodes);
      std::exception_ptr failure;
      const auto n = static_cast<std::ptrdiff_t>(opt.episodes);
#pragma omp parallel for schedule(dynamic) num_threads(opt.jobs > 0 ? opt.jobs : omp_get_max_threads())
      for (std::ptrdiff_t e = 0; e < n; ++e) {
        try {
          RngStream r1(opt.seed, static_cast<std::uint64_t>(e));
          RngStream r2(opt.seed, static_cast<std::uint64_t>(e));
          const Matrix a = transported_support(gen_task(geo, clean, r1), opt.beta);
          const Matrix b = transported_support(gen_task(geo, noisy, r2), opt.beta);
          double s = 0.0;
          double l = 0.0;
          for (std::size_t i = 0; i < a.rows(); ++i) {
            double row = 0.0;
            for (std::size_t t = 0; t < a.cols(); ++t) row += (a(i, t) - b(i, t)) * (a(i, t) - b(i, t));
            s += row;
            l += std::sqrt(row);
          }
          sq[static_cast<std::size_t>(e)] = s / static_cast<double>(a.rows());
          dist[static_cast<std::size_t>(e)] = l / static_cast<double>(a.rows());
        } catch (...) {
#pragma omp critical(pgada_theorem1_failure)
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
      const CiResult ci = aggregate_ci(sq);
      Theorem1Row row;
      row.sigma = sigma;
      row.dim = d;
      row.episodes = opt.episodes;
      row.mean_sq_error = ci.mean;
      row.std_error = ci.halfwidth / 1.96;
      row.mean_distance = aggregate_ci(dist).mean;
      row.predicted = std::sqrt(static_cast<double>(d) * 2.0 * sigma * sigma);
      rows.push_back(row);
    }
  }
  return rows;
}

double gaussian_w2(double m1, double s1, double m2, double s2) {
  return std::sqrt((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2));
}

std::vector<GaussianPair> default_lemma1_cases() {
  return {
      {0.0, 1.0, 1.0, 1.0, 0.5, 0.5},
      {0.0, 1.0, 0.0, 2.0, std::sqrt(3.0), std::sqrt(3.0)},
      {0.0, 1.0, 0.0, 1.0, 0.5, 0.5},
  };
}

bool empirical_matches(double empirical, double closed) {
  if (closed == 0.0) return std::abs(empirical) <= 0.1;
  return std::abs(empirical - closed) <= 0.1 * std::abs(closed);
}

std::vector<Lemma1Row> verify_lemma1(const Lemma1Options& opt) {
  if (opt.samples < 1000) throw DomainError("verify_lemma1: need at least 1000 samples");
  std::vector<Lemma1Row> rows;
  for (std::size_t k = 0; k < opt.cases.size(); ++k) {
    const GaussianPair& g = opt.cases[k];
    if (!(g.sd_s >= 0.0 && g.sd_q >= 0.0 && g.sigma_s >= 0.0 && g.sigma_q >= 0.0)) {
      throw DomainError("verify_lemma1: standard deviations must be >= 0");
    }
    Lemma1Row row;
    row.pair = g;
    row.w_closed = gaussian_w2(g.mean_s, g.sd_s, g.mean_q, g.sd_q);
    row.w_conv_closed = gaussian_w2(g.mean_s, std::hypot(g.sd_s, g.sigma_s), g.mean_q, std::hypot(g.sd_q, g.sigma_q));
    row.left_inequality = row.w_conv_closed <= row.w_closed + 1e-12;
    row.bound_linear = row.w_conv_closed + g.sigma_s + g.sigma_q;
    row.bound_root = row.w_conv_closed + std::hypot(g.sigma_s, g.sigma_q);

    RngStream rng(opt.seed, k);
    Matrix x = gaussian_sample(rng, g.mean_s, g.sd_s, opt.samples, 1);
    Matrix y = gaussian_sample(rng, g.mean_q, g.sd_q, opt.samples, 1);
    row.w_empirical = wasserstein_estimate(x, y, opt.beta);
    const Matrix zx = gaussian_sample(rng, 0.0, g.sigma_s, opt.samples, 1);
    const Matrix zy = gaussian_sample(rng, 0.0, g.sigma_q, opt.samples, 1);
    for (std::size_t i = 0; i < opt.samples; ++i) {
      x.data()[i] += zx.data()[i];
      y.data()[i] += zy.data()[i];
    }
    row.w_conv_empirical = wasserstein_estimate(x, y, opt.beta);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pgada
