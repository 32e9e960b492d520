#include <map>

#include "pgada/error.hpp"
#include "pgada/experiments.hpp"

namespace pgada {

namespace {

// Variants that only change evaluation share the full model.
AblationVariant training_key(AblationVariant v) {
  return v == AblationVariant::no_ot || v == AblationVariant::conventional_bn ? AblationVariant::full : v;
}

}  // namespace

std::vector<RunReport> run_ablation_suite(const AblationSetup& setup, std::span<const AblationVariant> variants) {
  if (variants.empty()) throw UsageError("run_ablation_suite: no variants requested");
  if (setup.episode_count < 100) throw DomainError("run_ablation_suite: need at least 100 episodes");
  std::map<AblationVariant, ModelStack> models;
  for (AblationVariant v : variants) {
    const AblationVariant key = training_key(v);
    if (!models.contains(key)) models.emplace(key, train_pgada(setup.pool, setup.train, key).model);
  }
  std::vector<RunReport> reports;
  for (AblationVariant v : variants) {
    const EvalConfig cfg = eval_config_for(v, setup.eval);
    RunReport r = run_evaluation(models.at(training_key(v)), setup.episodes, cfg, setup.episode_count, setup.jobs,
                                 std::string(to_string(v)));
    r.config["train"] = train_config_to_json(setup.train);
    reports.push_back(std::move(r));
  }
  return reports;
}

}  // namespace pgada
