#include <chrono>
#include <cstdio>
#include <exception>
#include <sstream>

#include <omp.h>

#include "pgada/error.hpp"
#include "pgada/experiments.hpp"

namespace pgada {

RunReport run_evaluation(const ModelStack& model, const EpisodeSet& set, const EvalConfig& cfg,
                         std::size_t count, int jobs, std::string variant) {
  cfg.validate();
  model.validate();
  if (count == 0) throw UsageError("run_evaluation: episode count must be >= 1");
  if (count > set.count) {
    throw UsageError("run_evaluation: requested " + std::to_string(count) + " episodes, set has " +
                     std::to_string(set.count));
  }
  if (set.geometry.input_dim != model.input_dim()) {
    throw ShapeError("episodes have " + std::to_string(set.geometry.input_dim) + " input dims, model expects " +
                     std::to_string(model.input_dim()));
  }
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.variant = std::move(variant);
  rep.episodes.resize(count);
  std::exception_ptr failure;
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
  const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto idx = static_cast<std::size_t>(i);
      const Episode ep = set.episode(idx);
      const EpisodeResult r = evaluate_episode(ep, model, cfg);
      rep.episodes[idx] = EpisodeRecord{idx, ep.seed, ep.stream, r.accuracy, r.diag};
    } catch (...) {
#pragma omp critical(pgada_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<double> accs;
  accs.reserve(count);
  for (const auto& e : rep.episodes) accs.push_back(e.accuracy);
  const CiResult ci = aggregate_ci(accs);
  rep.mean_accuracy = ci.mean;
  rep.ci95_halfwidth = ci.halfwidth;
  rep.episode_count = count;
  rep.config = nlohmann::json{{"classifier", to_string(cfg.classifier)},
                              {"use_ot", cfg.use_ot},
                              {"beta", cfg.beta},
                              {"normalization", to_string(cfg.normalization)},
                              {"sinkhorn_tol", cfg.sinkhorn_tol},
                              {"sinkhorn_max_iter", cfg.sinkhorn_max_iter},
                              {"episodes", episode_set_to_json(set)}};
  rep.config["episodes"].erase("episodes");
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& e : r.episodes) {
    eps.push_back(nlohmann::json{{"index", e.index},
                                 {"seed", e.seed},
                                 {"stream", e.stream},
                                 {"accuracy", e.accuracy},
                                 {"transport_cost", e.diag.transport_cost},
                                 {"marginal_violation", e.diag.marginal_violation},
                                 {"plan_entropy", e.diag.plan_entropy},
                                 {"sinkhorn_iterations", e.diag.sinkhorn_iterations},
                                 {"converged", e.diag.converged}});
  }
  return nlohmann::json{{"variant", r.variant},
                        {"mean_accuracy", r.mean_accuracy},
                        {"ci95_halfwidth", r.ci95_halfwidth},
                        {"episode_count", r.episode_count},
                        {"config", r.config},
                        {"episodes", std::move(eps)}};
}

namespace {

void append_rows(std::ostringstream& out, const RunReport& r) {
  for (const auto& e : r.episodes) {
    out << e.index << ',' << e.seed << ',' << e.stream << ',' << r.variant << ',' << format_real(e.accuracy) << ','
        << format_real(e.diag.transport_cost) << ',' << format_real(e.diag.marginal_violation) << "\r\n";
  }
}

constexpr const char* kCsvHeader = "index,seed,stream,variant,accuracy,transport_cost,marginal_violation\r\n";

}  // namespace

std::string report_to_csv(const RunReport& r) {
  std::ostringstream out;
  out << kCsvHeader;
  append_rows(out, r);
  return out.str();
}

std::string reports_to_csv(std::span<const RunReport> reports) {
  std::ostringstream out;
  out << kCsvHeader;
  for (const auto& r : reports) append_rows(out, r);
  return out.str();
}

}  // namespace pgada
