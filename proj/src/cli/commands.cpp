#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pgada/checkpoint.hpp"
#include "pgada/cli.hpp"
#include "pgada/error.hpp"
#include "pgada/transport.hpp"

namespace pgada {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kPoolStream = 0x706f6f6cULL;

void info(const std::string& msg) { std::cerr << "[info] " << msg << '\n'; }
void warn(const std::string& msg) { std::cerr << "[warn] " << msg << '\n'; }

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> jobs;
  std::optional<std::size_t> episodes;
  std::optional<std::string> variant;
  std::optional<std::size_t> epochs;
  std::optional<double> eta;
  std::optional<std::size_t> batch;
  std::optional<double> beta;
  std::optional<std::string> classifier;
  std::optional<std::string> normalization;
  bool no_ot = false;
};

void add_common(CLI::App* app, Overrides& ov) {
  app->add_option("-c,--config", ov.config_path, "JSON config file");
  app->add_option("--seed", ov.seed, "Master seed");
  app->add_option("-o,--out", ov.out, "Output directory");
  app->add_option("-j,--jobs", ov.jobs, "Worker threads (0 = all cores)");
  app->add_option("--epochs", ov.epochs, "Training epochs");
  app->add_option("--eta", ov.eta, "SGD learning rate");
  app->add_option("--batch", ov.batch, "Batch size");
  app->add_option("--beta", ov.beta, "OT cost weight in (0, 1)");
  app->add_option("--classifier", ov.classifier, "proto | matching");
  app->add_option("--normalization", ov.normalization, "transductive | conventional | none");
}

CliConfig resolve(const Overrides& ov) {
  CliConfig c = ov.config_path.empty() ? default_config() : load_config(ov.config_path);
  if (ov.seed) c.seed = *ov.seed;
  if (ov.out) c.output_dir = *ov.out;
  if (ov.jobs) c.jobs = *ov.jobs;
  if (ov.episodes) c.episodes = *ov.episodes;
  if (ov.variant) c.variant = *ov.variant;
  if (ov.epochs) c.train.epochs = *ov.epochs;
  if (ov.eta) c.train.eta = *ov.eta;
  if (ov.batch) c.train.batch = *ov.batch;
  if (ov.beta) c.eval.beta = *ov.beta;
  if (ov.classifier) c.eval.classifier = parse_classifier(*ov.classifier);
  if (ov.normalization) c.eval.normalization = parse_normalization(*ov.normalization);
  if (ov.no_ot) c.eval.use_ot = false;
  c.validate();
  c.train.seed = c.seed;
  c.theorem1.seed = c.seed;
  c.theorem1.jobs = c.jobs;
  c.lemma1.seed = c.seed;
  return c;
}

// Config echo for report payloads: everything except where files go and how
// many threads ran, which must not change the payload bytes.
json config_echo(const CliConfig& c) {
  json j = config_to_json(c);
  j.erase("output_dir");
  j.erase("jobs");
  return j;
}

fs::path prepare_dir(const CliConfig& c) {
  const fs::path dir(c.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(1) + "\n"); }

json timing_meta(const CliConfig& c, double seconds) {
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return json{{"output_dir", c.output_dir},
              {"jobs", c.jobs},
              {"wall_clock_seconds", seconds},
              {"finished_unix_seconds", std::chrono::duration_cast<std::chrono::seconds>(now).count()}};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

EpisodeSet episode_set_for(const CliConfig& c) {
  EpisodeSet set;
  set.geometry = c.geometry;
  set.shift = c.shift;
  set.seed = c.seed;
  set.count = c.episodes;
  return set;
}

LabeledPool make_pool(const CliConfig& c) {
  RngStream rng(c.seed, kPoolStream);
  return gen_pool(c.geometry, c.pool_classes, c.resolved_pool_size(), rng);
}

int cmd_gen_data(const CliConfig& c, bool with_data) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_dir(c);
  const LabeledPool pool = make_pool(c);
  write_text_file(dir / "pool.json", pool_to_json(pool).dump() + "\n");
  write_text_file(dir / "episodes.json", episode_set_to_json(episode_set_for(c), with_data).dump() + "\n");
  write_json(dir / "gen_data.meta.json", json{{"config", config_echo(c)}, {"timing", timing_meta(c, seconds_since(t0))}});
  info("wrote " + (dir / "pool.json").string() + " (" + std::to_string(pool.x.rows()) + " rows) and " +
       (dir / "episodes.json").string() + " (" + std::to_string(c.episodes) + " episodes)");
  return kExitOk;
}

std::string curve_csv(const json& curve) {
  std::ostringstream out;
  out << "epoch,L_ori,L_adv,L_self,L_dist,total,generator_objective\r\n";
  for (const auto& r : curve) {
    out << r.at("epoch").get<std::size_t>();
    for (const char* k : {"ori", "adv", "self", "dist", "total", "generator_objective"}) {
      out << ',' << format_real(r.at(k).get<double>());
    }
    out << "\r\n";
  }
  return out.str();
}

json curve_rows(const std::vector<EpochStats>& curve) {
  json rows = json::array();
  for (const auto& e : curve) {
    rows.push_back(json{{"epoch", e.epoch},
                        {"ori", e.model_step.ori},
                        {"adv", e.model_step.adv},
                        {"self", e.model_step.self},
                        {"dist", e.model_step.dist},
                        {"total", e.model_step.total},
                        {"generator_objective", e.generator_objective}});
  }
  return rows;
}

int cmd_train(const CliConfig& c, const std::string& pool_arg, const std::string& resume) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_dir(c);
  const fs::path pool_path = pool_arg.empty() ? dir / "pool.json" : fs::path(pool_arg);
  if (!fs::exists(pool_path)) throw IoError("pool file '" + pool_path.string() + "' not found");
  const LabeledPool pool = pool_from_json(read_json_file(pool_path));
  const AblationVariant variant = parse_variant(c.variant);

  json prior_curve = json::array();
  TrainResult res;
  if (!resume.empty()) {
    json state;
    ModelStack start = load_checkpoint(resume, &state);
    const auto done = state.value("epochs_completed", std::size_t{0});
    if (state.value("variant", std::string("full")) != c.variant) {
      throw UsageError("checkpoint was trained as variant '" + state.value("variant", std::string("full")) +
                       "', not '" + c.variant + "'");
    }
    if (done > c.train.epochs) throw UsageError("checkpoint already has more epochs than requested");
    prior_curve = state.value("curve", json::array());
    info("resuming from " + resume + " after epoch " + std::to_string(done));
    res = train_pgada(pool, c.train, variant, std::move(start), done);
  } else {
    res = train_pgada(pool, c.train, variant);
  }
  json curve = prior_curve;
  for (auto& r : curve_rows(res.curve)) curve.push_back(r);

  json state{{"epochs_completed", c.train.epochs}, {"variant", c.variant}, {"curve", curve}, {"config", config_echo(c)}};
  save_checkpoint(dir / "model.json", res.model, state);
  write_text_file(dir / "curve.csv", curve_csv(curve));
  write_json(dir / "train.meta.json", json{{"variant", c.variant},
                                           {"curve", "curve.csv"},
                                           {"config", config_echo(c)},
                                           {"timing", timing_meta(c, seconds_since(t0))}});
  if (!curve.empty()) {
    std::printf("variant %s: combined loss %.4f -> %.4f over %zu epochs\n", c.variant.c_str(),
                curve.front().at("total").get<double>(), curve.back().at("total").get<double>(), curve.size());
  }
  info("wrote " + (dir / "model.json").string());
  return kExitOk;
}

void write_plan_csv(const fs::path& path, const Matrix& plan) {
  std::ostringstream out;
  out << "row,col,mass\r\n";
  for (std::size_t i = 0; i < plan.rows(); ++i)
    for (std::size_t j = 0; j < plan.cols(); ++j) out << i << ',' << j << ',' << format_real(plan(i, j)) << "\r\n";
  write_text_file(path, out.str());
}

int cmd_eval(const CliConfig& c, const std::string& ckpt_arg, const std::string& episodes_arg,
             std::optional<std::size_t> dump_plan) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_dir(c);
  const fs::path ckpt = ckpt_arg.empty() ? dir / "model.json" : fs::path(ckpt_arg);
  const fs::path ep_path = episodes_arg.empty() ? dir / "episodes.json" : fs::path(episodes_arg);
  if (!fs::exists(ckpt)) throw IoError("checkpoint '" + ckpt.string() + "' not found");
  if (!fs::exists(ep_path)) throw IoError("episode file '" + ep_path.string() + "' not found");
  const ModelStack model = load_checkpoint(ckpt);
  const EpisodeSet set = episode_set_from_json(read_json_file(ep_path));
  std::size_t count = c.episodes;
  if (count > set.count) {
    warn("episode file holds " + std::to_string(set.count) + " episodes; evaluating all of them");
    count = set.count;
  }
  const EvalConfig cfg = eval_config_for(parse_variant(c.variant), c.eval);
  RunReport rep = run_evaluation(model, set, cfg, count, c.jobs, c.variant);
  rep.config["resolved"] = config_echo(c);
  write_json(dir / "report.json", report_to_json(rep));
  write_text_file(dir / "report.csv", report_to_csv(rep));
  write_json(dir / "report.meta.json", json{{"timing", timing_meta(c, seconds_since(t0))}});
  if (dump_plan) {
    if (!cfg.use_ot) throw UsageError("--dump-plan needs OT enabled");
    if (*dump_plan >= count) throw UsageError("--dump-plan index out of range");
    const EpisodeResult r = evaluate_episode(set.episode(*dump_plan), model, cfg);
    write_plan_csv(dir / ("plan_" + std::to_string(*dump_plan) + ".csv"), r.plan);
  }
  std::printf("%.4f ± %.4f\n", rep.mean_accuracy, rep.ci95_halfwidth);
  return kExitOk;
}

struct Check {
  std::string name;
  bool ok = false;
  std::string detail;
};

int report_checks(const std::vector<Check>& checks) {
  bool all = true;
  for (const auto& ch : checks) {
    std::printf("%s %s: %s\n", ch.ok ? "PASS" : "FAIL", ch.name.c_str(), ch.detail.c_str());
    all = all && ch.ok;
  }
  return all ? kExitOk : kExitVerify;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::vector<Check> theorem1_checks(const std::vector<Theorem1Row>& rows) {
  std::vector<Check> checks;
  auto find = [&](double s, std::size_t d) -> const Theorem1Row& {
    for (const auto& r : rows)
      if (r.sigma == s && r.dim == d) return r;
    throw UsageError("theorem1: missing grid cell");
  };
  std::vector<double> sigmas;
  std::vector<std::size_t> dims;
  for (const auto& r : rows) {
    if (std::find(sigmas.begin(), sigmas.end(), r.sigma) == sigmas.end()) sigmas.push_back(r.sigma);
    if (std::find(dims.begin(), dims.end(), r.dim) == dims.end()) dims.push_back(r.dim);
  }
  std::sort(sigmas.begin(), sigmas.end());
  std::sort(dims.begin(), dims.end());
  auto gap_check = [&](const std::string& name, const Theorem1Row& lo, const Theorem1Row& hi) {
    const double gap = hi.mean_sq_error - lo.mean_sq_error;
    const double se = std::hypot(lo.std_error, hi.std_error);
    checks.push_back({name, gap > 0.0 && gap >= 5.0 * se, fmt("gap %.6g, 5 standard errors %.6g", gap, 5.0 * se)});
  };
  for (std::size_t d : dims) {
    if (sigmas.front() == 0.0) {
      const double e = find(0.0, d).mean_sq_error;
      checks.push_back({"zero error at sigma=0, d=" + std::to_string(d), std::abs(e) <= 1e-9, fmt("error %.3g (limit %.0e)", e, 1e-9)});
    }
    for (std::size_t k = 0; k + 1 < sigmas.size(); ++k) {
      gap_check("monotone in sigma " + format_real(sigmas[k]) + " -> " + format_real(sigmas[k + 1]) +
                    ", d=" + std::to_string(d),
                find(sigmas[k], d), find(sigmas[k + 1], d));
    }
  }
  for (double s : sigmas) {
    if (s == 0.0) continue;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      gap_check("monotone in d " + std::to_string(dims[k]) + " -> " + std::to_string(dims[k + 1]) +
                    ", sigma=" + format_real(s),
                find(s, dims[k]), find(s, dims[k + 1]));
    }
  }
  return checks;
}

int cmd_verify(const CliConfig& c, const std::string& kind) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_dir(c);
  std::ostringstream csv;
  std::vector<Check> checks;
  if (kind == "theorem1") {
    const std::vector<Theorem1Row> rows = verify_theorem1(c.theorem1);
    csv << "sigma,dim,episodes,mean_sq_error,std_error,mean_distance,predicted\r\n";
    for (const auto& r : rows) {
      csv << format_real(r.sigma) << ',' << r.dim << ',' << r.episodes << ',' << format_real(r.mean_sq_error) << ','
          << format_real(r.std_error) << ',' << format_real(r.mean_distance) << ',' << format_real(r.predicted)
          << "\r\n";
    }
    checks = theorem1_checks(rows);
  } else if (kind == "lemma1") {
    const std::vector<Lemma1Row> rows = verify_lemma1(c.lemma1);
    csv << "mean_s,sd_s,mean_q,sd_q,sigma_s,sigma_q,w_closed,w_conv_closed,w_empirical,w_conv_empirical,"
           "left_inequality,bound_linear,bound_root\r\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& r = rows[k];
      const auto& g = r.pair;
      for (double v : {g.mean_s, g.sd_s, g.mean_q, g.sd_q, g.sigma_s, g.sigma_q, r.w_closed, r.w_conv_closed,
                       r.w_empirical, r.w_conv_empirical}) {
        csv << format_real(v) << ',';
      }
      csv << (r.left_inequality ? "true" : "false") << ',' << format_real(r.bound_linear) << ','
          << format_real(r.bound_root) << "\r\n";
      const std::string tag = "case " + std::to_string(k);
      checks.push_back({tag + " left inequality", r.left_inequality,
                        fmt("W(conv) %.6g <= W %.6g", r.w_conv_closed, r.w_closed)});
      checks.push_back({tag + " empirical W", empirical_matches(r.w_empirical, r.w_closed),
                        fmt("estimate %.6g vs closed form %.6g", r.w_empirical, r.w_closed)});
      checks.push_back({tag + " empirical W(conv)", empirical_matches(r.w_conv_empirical, r.w_conv_closed),
                        fmt("estimate %.6g vs closed form %.6g", r.w_conv_empirical, r.w_conv_closed)});
    }
  } else {
    throw UsageError("verify: unknown kind '" + kind + "' (expected theorem1 or lemma1)");
  }
  write_text_file(dir / (kind + ".csv"), csv.str());
  write_json(dir / (kind + ".meta.json"), json{{"config", config_echo(c)}, {"timing", timing_meta(c, seconds_since(t0))}});
  return report_checks(checks);
}

int cmd_ablate(const CliConfig& c, const std::string& pool_arg, const std::vector<std::string>& names) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir = prepare_dir(c);
  std::vector<AblationVariant> variants;
  if (names.empty()) {
    variants = all_variants();
  } else {
    for (const auto& n : names) variants.push_back(parse_variant(n));
  }
  AblationSetup setup;
  setup.pool = pool_arg.empty() ? make_pool(c) : pool_from_json(read_json_file(pool_arg));
  setup.train = c.train;
  setup.episodes = episode_set_for(c);
  setup.eval = c.eval;
  setup.episode_count = c.episodes;
  setup.jobs = c.jobs;
  const std::vector<RunReport> reports = run_ablation_suite(setup, variants);
  json doc{{"config", config_echo(c)}, {"reports", json::array()}};
  for (const auto& r : reports) {
    doc["reports"].push_back(report_to_json(r));
    std::printf("%-16s %.4f ± %.4f\n", r.variant.c_str(), r.mean_accuracy, r.ci95_halfwidth);
  }
  write_json(dir / "ablation.json", doc);
  write_text_file(dir / "ablation.csv", reports_to_csv(reports));
  write_json(dir / "ablation.meta.json", json{{"timing", timing_meta(c, seconds_since(t0))}});
  return kExitOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"pgada: adversarial embeddings and entropic OT alignment for shifted few-shot episodes"};
  app.require_subcommand(1);

  Overrides ov;
  bool with_data = false;
  std::string pool_path;
  std::string resume;
  std::string ckpt;
  std::string episode_file;
  std::optional<std::size_t> dump_plan;
  std::string kind;
  std::vector<std::string> variant_names;

  CLI::App* gen = app.add_subcommand("gen-data", "Write a training pool and an episode set");
  add_common(gen, ov);
  gen->add_option("--episodes", ov.episodes, "Episodes in the set");
  gen->add_flag("--with-data", with_data, "Also dump every episode's arrays");

  CLI::App* train = app.add_subcommand("train", "Train a model stack on the pool");
  add_common(train, ov);
  train->add_option("--pool", pool_path, "Pool file (default <out>/pool.json)");
  train->add_option("--ablation", ov.variant, "Ablation variant");
  train->add_option("--resume", resume, "Continue from this checkpoint");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on an episode set");
  add_common(eval, ov);
  eval->add_option("--checkpoint", ckpt, "Checkpoint (default <out>/model.json)");
  eval->add_option("--episode-file", episode_file, "Episode set (default <out>/episodes.json)");
  eval->add_option("--episodes", ov.episodes, "Evaluate at most this many episodes");
  eval->add_option("--ablation", ov.variant, "Variant whose evaluation settings apply");
  eval->add_flag("--no-ot", ov.no_ot, "Disable transport alignment");
  eval->add_option("--dump-plan", dump_plan, "Write the transport plan of this episode as CSV");

  CLI::App* verify = app.add_subcommand("verify", "Run a theory verification harness");
  add_common(verify, ov);
  verify->add_option("kind", kind, "theorem1 | lemma1")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "Train and evaluate ablation variants");
  add_common(ablate, ov);
  ablate->add_option("--pool", pool_path, "Pool file (default: generated from the config)");
  ablate->add_option("--episodes", ov.episodes, "Episodes per variant");
  ablate->add_option("--variants", variant_names, "Variants to run (default all)")->delimiter(',');
  ablate->add_flag("--no-ot", ov.no_ot, "Disable transport alignment for every variant");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "[error] " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    const CliConfig cfg = resolve(ov);
    if (gen->parsed()) return cmd_gen_data(cfg, with_data);
    if (train->parsed()) return cmd_train(cfg, pool_path, resume);
    if (eval->parsed()) return cmd_eval(cfg, ckpt, episode_file, dump_plan);
    if (verify->parsed()) return cmd_verify(cfg, kind);
    if (ablate->parsed()) return cmd_ablate(cfg, pool_path, variant_names);
  } catch (const NumericError& e) {
    std::cerr << "[error] numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DegeneratePlanError& e) {
    std::cerr << "[error] numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    std::cerr << "[error] " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "[error] " << e.what() << '\n';
    return kExitUsage;
  } catch (const json::exception& e) {
    std::cerr << "[error] " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "[error] unexpected failure: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}

}  // namespace pgada
