#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <json.hpp>

#include "pgada/cli.hpp"
#include "pgada/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kTmp = PGADA_TEST_TMP;

struct RunOutput {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunOutput run(const std::string& args) {
  fs::create_directories(kTmp);
  const fs::path out = kTmp / "stdout.txt";
  const fs::path err = kTmp / "stderr.txt";
  const std::string cmd =
      std::string("'") + PGADA_CLI_PATH + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  RunOutput r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = kTmp / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

// Small enough for a few seconds per command.
json small_config() {
  return json{{"seed", 3},
              {"episodes", 20},
              {"geometry", {{"input_dim", 8}, {"class_sep", 4.0}}},
              {"pool", {{"classes", 4}, {"size", 256}}},
              {"shift", {{"query_noise", 0.3}}},
              {"train", {{"eta", 0.05}, {"batch", 32}, {"epochs", 4}, {"hidden_dim", 8}, {"embed_dim", 4}}}};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("gen-data is byte-identical for a fixed seed") {
  const fs::path a = fresh_dir("gen_a");
  const fs::path b = fresh_dir("gen_b");
  const fs::path cfg = write_config(a, small_config());
  REQUIRE(run("gen-data -c " + q(cfg) + " -o " + q(a)).code == 0);
  REQUIRE(run("gen-data -c " + q(cfg) + " -o " + q(b)).code == 0);
  CHECK(slurp(a / "pool.json") == slurp(b / "pool.json"));
  CHECK(slurp(a / "episodes.json") == slurp(b / "episodes.json"));
  CHECK(fs::exists(a / "gen_data.meta.json"));
}

TEST_CASE("train writes a decreasing curve and honors the variant") {
  const fs::path d = fresh_dir("train");
  const fs::path cfg = write_config(d, small_config());
  REQUIRE(run("gen-data -c " + q(cfg) + " -o " + q(d)).code == 0);
  const RunOutput r = run("train -c " + q(cfg) + " -o " + q(d));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("variant full: combined loss") != std::string::npos);

  std::istringstream curve(slurp(d / "curve.csv"));
  std::string line;
  std::getline(curve, line);
  CHECK(line.rfind("epoch,L_ori,L_adv,L_self,L_dist,total,generator_objective", 0) == 0);
  std::vector<double> totals;
  while (std::getline(curve, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 7);
    totals.push_back(std::stod(cells[5]));
  }
  REQUIRE(totals.size() == 4);
  CHECK(totals.back() < totals.front());

  const fs::path g = fresh_dir("train_fixed");
  REQUIRE(run("train -c " + q(cfg) + " -o " + q(g) + " --pool " + q(d / "pool.json") + " --ablation fixed_g").code ==
          0);
  CHECK(json::parse(slurp(g / "train.meta.json")).at("variant") == "fixed_g");
  CHECK(json::parse(slurp(g / "model.json")).at("state").at("variant") == "fixed_g");
}

TEST_CASE("resumed training equals an uninterrupted run") {
  const fs::path d = fresh_dir("resume");
  const fs::path cfg = write_config(d, small_config());
  REQUIRE(run("gen-data -c " + q(cfg) + " -o " + q(d)).code == 0);
  const fs::path full = fresh_dir("resume_full");
  const fs::path part = fresh_dir("resume_part");
  const fs::path pool = d / "pool.json";
  REQUIRE(run("train -c " + q(cfg) + " -o " + q(full) + " --pool " + q(pool)).code == 0);
  REQUIRE(run("train -c " + q(cfg) + " -o " + q(part) + " --pool " + q(pool) + " --epochs 2").code == 0);
  REQUIRE(run("train -c " + q(cfg) + " -o " + q(part) + " --pool " + q(pool) + " --resume " +
              q(part / "model.json"))
              .code == 0);
  const json a = json::parse(slurp(full / "model.json"));
  const json b = json::parse(slurp(part / "model.json"));
  CHECK(a.at("model") == b.at("model"));
  CHECK(a.at("state").at("curve") == b.at("state").at("curve"));
}

TEST_CASE("eval reports accuracy, honors flags and caps episodes") {
  json c = small_config();
  c["geometry"]["class_sep"] = 30.0;
  c["shift"]["query_noise"] = 0.0;
  const fs::path d = fresh_dir("eval");
  const fs::path cfg = write_config(d, c);
  REQUIRE(run("gen-data -c " + q(cfg) + " -o " + q(d)).code == 0);
  REQUIRE(run("train -c " + q(cfg) + " -o " + q(d)).code == 0);
  const RunOutput r = run("eval -c " + q(cfg) + " -o " + q(d) + " --dump-plan 0");
  REQUIRE(r.code == 0);
  CHECK(std::regex_match(r.out, std::regex(R"(\d\.\d{4} ± \d\.\d{4}\n)")));
  const json rep = json::parse(slurp(d / "report.json"));
  CHECK(rep.at("mean_accuracy").get<double>() >= 0.95);
  CHECK(rep.at("episode_count") == 20);
  CHECK(rep.at("config").at("use_ot") == true);
  CHECK(fs::exists(d / "plan_0.csv"));
  CHECK(slurp(d / "report.csv").rfind("index,seed,stream,variant,accuracy,transport_cost,marginal_violation\r\n", 0) ==
        0);

  const fs::path n = fresh_dir("eval_no_ot");
  REQUIRE(run("eval -c " + q(cfg) + " -o " + q(n) + " --checkpoint " + q(d / "model.json") + " --episode-file " +
              q(d / "episodes.json") + " --no-ot --episodes 7")
              .code == 0);
  const json rn = json::parse(slurp(n / "report.json"));
  CHECK(rn.at("config").at("use_ot") == false);
  CHECK(rn.at("episode_count") == 7);
  CHECK(rn.at("episodes").size() == 7);
}

TEST_CASE("reports are identical across runs and job counts") {
  const fs::path d = fresh_dir("det");
  const fs::path cfg = write_config(d, small_config());
  REQUIRE(run("gen-data -c " + q(cfg) + " -o " + q(d)).code == 0);
  std::string reports[3];
  const char* jobs[3] = {"1", "1", "4"};
  for (int i = 0; i < 3; ++i) {
    const fs::path o = fresh_dir("det_" + std::to_string(i));
    REQUIRE(run("train -c " + q(cfg) + " -o " + q(o) + " --pool " + q(d / "pool.json") + " -j " + jobs[i]).code == 0);
    REQUIRE(run("eval -c " + q(cfg) + " -o " + q(o) + " --episode-file " + q(d / "episodes.json") + " -j " + jobs[i])
                .code == 0);
    reports[i] = slurp(o / "report.json") + slurp(o / "report.csv");
  }
  CHECK(!reports[0].empty());
  CHECK(reports[0] == reports[1]);
  CHECK(reports[0] == reports[2]);
}

TEST_CASE("exit codes") {
  const fs::path d = fresh_dir("exit");
  const fs::path cfg = write_config(d, small_config());

  const fs::path blocker = d / "file.txt";
  std::ofstream(blocker) << "x";
  CHECK(run("gen-data -c " + q(cfg) + " -o " + q(blocker / "sub")).code == 2);

  CHECK(run("train -c " + q(cfg) + " -o " + q(d / "nopool")).code == 2);

  std::ofstream(d / "malformed.json") << "{\"seed\": 3,";
  const RunOutput bad = run("gen-data -c " + q(d / "malformed.json") + " -o " + q(d));
  CHECK(bad.code == 2);
  CHECK(bad.err.find("parse error at byte") != std::string::npos);

  json unknown = small_config();
  unknown["train"]["learning_rate"] = 0.1;
  const fs::path uk = d / "unknown";
  fs::create_directories(uk);
  const RunOutput ur = run("gen-data -c " + q(write_config(uk, unknown)) + " -o " + q(d));
  CHECK(ur.code == 2);
  CHECK(ur.err.find("/train/learning_rate") != std::string::npos);

  json wrong_type = small_config();
  wrong_type["train"]["eta"] = "fast";
  const fs::path wt = d / "wrong_type";
  fs::create_directories(wt);
  CHECK(run("gen-data -c " + q(write_config(wt, wrong_type)) + " -o " + q(d)).code == 2);

  CHECK(run("bogus-command").code == 2);
  CHECK(run("eval -o " + q(d) + " --classifier knn").code == 2);

  // A model for 8 inputs against episodes with 6.
  REQUIRE(run("gen-data -c " + q(cfg) + " -o " + q(d)).code == 0);
  REQUIRE(run("train -c " + q(cfg) + " -o " + q(d)).code == 0);
  json other = small_config();
  other["geometry"]["input_dim"] = 6;
  const fs::path od = d / "other";
  fs::create_directories(od);
  REQUIRE(run("gen-data -c " + q(write_config(od, other)) + " -o " + q(od)).code == 0);
  const RunOutput shape = run("eval -c " + q(cfg) + " -o " + q(d) + " --episode-file " + q(od / "episodes.json"));
  CHECK(shape.code == 2);

  CHECK(run("train -c " + q(cfg) + " -o " + q(d) + " --eta 1e300").code == 3);

  json flat = small_config();
  flat["theorem1"] = {{"sigmas", {0.2, 0.2001}}, {"dims", {4}}, {"episodes", 100}};
  const fs::path fd = d / "flat";
  fs::create_directories(fd);
  const RunOutput v = run("verify theorem1 -c " + q(write_config(fd, flat)) + " -o " + q(fd));
  CHECK(v.code == 4);
  CHECK(v.out.find("FAIL") != std::string::npos);
}

TEST_CASE("verify harnesses pass and write tables") {
  json c = small_config();
  c["theorem1"] = {{"episodes", 100}};
  // Two independent 1000-point samples of one Gaussian sit about 0.1 apart in
  // W2, so the equal-distribution case only passes at larger sample counts.
  c["lemma1"] = {{"samples", 1000},
                 {"cases",
                  {{{"mean_s", 0.0}, {"sd_s", 1.0}, {"mean_q", 1.0}, {"sd_q", 1.0}, {"sigma_s", 0.5}, {"sigma_q", 0.5}},
                   {{"mean_s", 0.0}, {"sd_s", 1.0}, {"mean_q", 0.0}, {"sd_q", 2.0}, {"sigma_s", 1.7320508075688772},
                    {"sigma_q", 1.7320508075688772}}}}};
  const fs::path d = fresh_dir("verify");
  const fs::path cfg = write_config(d, c);
  const RunOutput t = run("verify theorem1 -c " + q(cfg) + " -o " + q(d));
  CHECK(t.code == 0);
  CHECK(t.out.find("PASS") != std::string::npos);
  CHECK(fs::exists(d / "theorem1.csv"));
  const RunOutput l = run("verify lemma1 -c " + q(cfg) + " -o " + q(d));
  CHECK(l.code == 0);
  CHECK(fs::exists(d / "lemma1.csv"));
  CHECK(run("verify theorem2 -c " + q(cfg) + " -o " + q(d)).code == 2);
}

TEST_CASE("ablate writes one report per variant") {
  json c = small_config();
  c["episodes"] = 100;
  const fs::path d = fresh_dir("ablate");
  const fs::path cfg = write_config(d, c);
  const RunOutput r = run("ablate -c " + q(cfg) + " -o " + q(d) + " --variants full,no_ot,fixed_g");
  REQUIRE(r.code == 0);
  const json doc = json::parse(slurp(d / "ablation.json"));
  CHECK(r.out.find("no_ot") != std::string::npos);
  const std::string csv = slurp(d / "ablation.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 301);
  CHECK(run("ablate -c " + q(cfg) + " -o " + q(d) + " --variants full,everything").code == 2);
  CHECK(run("ablate -c " + q(cfg) + " -o " + q(d) + " --episodes 50").code == 2);
  (void)doc;
}

TEST_CASE("config loader") {
  const fs::path d = fresh_dir("config");
  json c = small_config();
  c["shift"]["query_transform"] = {{"offset", 1.5}, {"scale", 2.0}};
  const fs::path p = write_config(d, c);
  const pgada::CliConfig cfg = pgada::load_config(p);
  CHECK(cfg.geometry.input_dim == 8);
  CHECK(cfg.shift.query.offset == std::vector<double>(8, 1.5));
  CHECK(cfg.shift.query.scale == std::vector<double>(8, 2.0));
  CHECK(cfg.train.epochs == 4);
  const pgada::CliConfig back = pgada::config_from_json(pgada::config_to_json(cfg));
  CHECK(pgada::config_to_json(back) == pgada::config_to_json(cfg));
  CHECK_THROWS_AS(pgada::config_from_json(json{{"train", {{"batch", 1}}}}), pgada::UsageError);
  CHECK(pgada::default_config().resolved_pool_size() == 128 * 20);
}
