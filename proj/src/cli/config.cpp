#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "pgada/checkpoint.hpp"
#include "pgada/cli.hpp"
#include "pgada/error.hpp"

namespace pgada {

using nlohmann::json;

namespace {

// Reads one JSON object strictly: every key must be consumed by a reader call
// or finish() reports it as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw UsageError(where() + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    seen_.push_back(key);
    return j_.at(key);
  }

  std::string child(const char* key) const { return path_ + "/" + key; }

  template <typename T>
  void get(const char* key, T& dst) {
    if (!j_.contains(key)) return;
    seen_.push_back(key);
    try {
      dst = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw UsageError(child(key) + ": wrong type");
    }
  }

  void real(const char* key, double& dst, double lo, double hi, bool lo_open = false) {
    if (!j_.contains(key)) return;
    seen_.push_back(key);
    const json& v = j_.at(key);
    if (!v.is_number()) throw UsageError(child(key) + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < lo || x > hi || (lo_open && x == lo)) {
      std::ostringstream msg;
      msg << child(key) << ": " << x << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi << "]";
      throw UsageError(msg.str());
    }
    dst = x;
  }

  template <typename T>
  void count(const char* key, T& dst, std::uint64_t lo, std::uint64_t hi) {
    if (!j_.contains(key)) return;
    seen_.push_back(key);
    const json& v = j_.at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw UsageError(child(key) + ": expected a non-negative integer");
    }
    const auto x = v.get<std::uint64_t>();
    if (x < lo || x > hi) {
      throw UsageError(child(key) + ": " + std::to_string(x) + " outside [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
    }
    dst = static_cast<T>(x);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw UsageError(child(key.c_str()) + ": unknown key");
      }
    }
  }

 private:
  std::string where() const { return path_.empty() ? "/" : path_; }

  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

constexpr double kInf = 1e300;
constexpr std::uint64_t kMaxCount = 1ULL << 40;

Vector read_broadcast(const json& v, const std::string& path) {
  if (v.is_number()) return Vector{v.get<double>()};
  if (!v.is_array()) throw UsageError(path + ": expected a number or an array of numbers");
  Vector out;
  for (const auto& e : v) {
    if (!e.is_number()) throw UsageError(path + ": expected numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

// A scalar stands for the same value on every coordinate.
Vector expand(Vector v, std::size_t dim) {
  if (v.size() == 1 && dim > 1) v.assign(dim, v.front());
  return v;
}

void read_side(const json& j, const std::string& path, SideTransform& t, std::size_t dim) {
  ObjectReader r(j, path);
  if (r.has("scale")) t.scale = expand(read_broadcast(r.raw("scale"), r.child("scale")), dim);
  if (r.has("offset")) t.offset = expand(read_broadcast(r.raw("offset"), r.child("offset")), dim);
  r.real("rotation", t.rotation, -kInf, kInf);
  r.finish();
}

GaussianPair read_pair(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  GaussianPair g;
  r.real("mean_s", g.mean_s, -kInf, kInf);
  r.real("sd_s", g.sd_s, 0.0, kInf);
  r.real("mean_q", g.mean_q, -kInf, kInf);
  r.real("sd_q", g.sd_q, 0.0, kInf);
  r.real("sigma_s", g.sigma_s, 0.0, kInf);
  r.real("sigma_q", g.sigma_q, 0.0, kInf);
  r.finish();
  return g;
}

template <typename Fn>
void section(ObjectReader& top, const char* key, Fn&& fn) {
  if (!top.has(key)) return;
  ObjectReader r(top.raw(key), top.child(key));
  fn(r);
  r.finish();
}

}  // namespace

std::size_t CliConfig::resolved_pool_size() const {
  return pool_size > 0 ? pool_size : train.batch * std::max<std::size_t>(train.epochs, 1);
}

void CliConfig::validate() const {
  auto wrap = [](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      throw UsageError(std::string(what) + ": " + e.what());
    }
  };
  wrap("/geometry", [&] { geometry.validate(); });
  wrap("/shift", [&] { shift.validate(geometry.input_dim); });
  wrap("/train", [&] { train.validate(); });
  wrap("/eval", [&] { eval.validate(); });
  wrap("/variant", [&] { parse_variant(variant); });
  if (pool_classes < 2) throw UsageError("/pool/classes: must be >= 2");
  if (resolved_pool_size() < train.batch) throw UsageError("/pool/size: smaller than /train/batch");
  if (resolved_pool_size() < pool_classes) throw UsageError("/pool/size: fewer rows than classes");
  if (episodes < 1) throw UsageError("/episodes: must be >= 1");
  if (jobs < 0) throw UsageError("/jobs: must be >= 0");
  if (output_dir.empty()) throw UsageError("/output_dir: must not be empty");
}

CliConfig default_config() {
  CliConfig c;
  c.lemma1.cases = default_lemma1_cases();
  return c;
}

CliConfig config_from_json(const json& j, CliConfig c) {
  ObjectReader top(j, "");
  top.count("seed", c.seed, 0, ~0ULL);
  top.get("output_dir", c.output_dir);
  top.count("jobs", c.jobs, 0, 4096);
  top.count("episodes", c.episodes, 1, kMaxCount);
  top.get("variant", c.variant);
  section(top, "geometry", [&](ObjectReader& r) {
    r.count("n_way", c.geometry.n_way, 2, 1000);
    r.count("k_shot", c.geometry.k_shot, 1, 100000);
    r.count("q_target", c.geometry.q_target, 1, 100000);
    r.count("input_dim", c.geometry.input_dim, 1, 100000);
    r.real("class_sep", c.geometry.class_sep, 0.0, kInf, true);
    r.real("spread", c.geometry.spread, 0.0, kInf);
    r.count("latent_dim", c.geometry.latent_dim, 0, 100000);
    r.real("nuisance_spread", c.geometry.nuisance_spread, 0.0, kInf);
    r.count("world_seed", c.geometry.world_seed, 0, ~0ULL);
  });
  section(top, "pool", [&](ObjectReader& r) {
    r.count("classes", c.pool_classes, 2, 100000);
    r.count("size", c.pool_size, 0, kMaxCount);
  });
  section(top, "shift", [&](ObjectReader& r) {
    r.real("support_noise", c.shift.support_noise, 0.0, kInf);
    r.real("query_noise", c.shift.query_noise, 0.0, kInf);
    if (r.has("support_transform")) {
      read_side(r.raw("support_transform"), r.child("support_transform"), c.shift.support, c.geometry.input_dim);
    }
    if (r.has("query_transform")) {
      read_side(r.raw("query_transform"), r.child("query_transform"), c.shift.query, c.geometry.input_dim);
    }
  });
  section(top, "train", [&](ObjectReader& r) {
    r.real("eta", c.train.eta, 0.0, kInf, true);
    r.count("batch", c.train.batch, 2, kMaxCount);
    r.count("epochs", c.train.epochs, 0, kMaxCount);
    r.real("lambda1", c.train.lambda1, 0.0, kInf);
    r.real("lambda2", c.train.lambda2, 0.0, kInf);
    r.real("kl_weight", c.train.kl_weight, 0.0, kInf);
    r.real("epsilon", c.train.epsilon, 0.0, kInf, true);
    r.real("rho", c.train.rho, 0.0, kInf);
    r.real("tau", c.train.tau, 0.0, kInf, true);
    r.real("ssl_jitter", c.train.ssl_jitter, 0.0, kInf);
    r.count("hidden_dim", c.train.hidden_dim, 1, 100000);
    r.count("embed_dim", c.train.embed_dim, 1, 100000);
    r.count("proj_dim", c.train.proj_dim, 1, 100000);
  });
  section(top, "eval", [&](ObjectReader& r) {
    std::string name;
    if (r.has("classifier")) {
      r.get("classifier", name);
      try {
        c.eval.classifier = parse_classifier(name);
      } catch (const UsageError& e) {
        throw UsageError(r.child("classifier") + ": " + e.what());
      }
    }
    if (r.has("normalization")) {
      r.get("normalization", name);
      try {
        c.eval.normalization = parse_normalization(name);
      } catch (const UsageError& e) {
        throw UsageError(r.child("normalization") + ": " + e.what());
      }
    }
    r.get("use_ot", c.eval.use_ot);
    r.real("beta", c.eval.beta, 0.0, 1.0, true);
    if (c.eval.beta >= 1.0) throw UsageError(r.child("beta") + ": must be < 1");
    r.real("sinkhorn_tol", c.eval.sinkhorn_tol, 0.0, kInf, true);
    r.count("sinkhorn_max_iter", c.eval.sinkhorn_max_iter, 1, kMaxCount);
  });
  section(top, "theorem1", [&](ObjectReader& r) {
    if (r.has("sigmas")) {
      c.theorem1.sigmas = read_broadcast(r.raw("sigmas"), r.child("sigmas"));
      for (double s : c.theorem1.sigmas)
        if (!(s >= 0.0) || !std::isfinite(s)) throw UsageError(r.child("sigmas") + ": entries must be >= 0");
    }
    if (r.has("dims")) {
      const json& d = r.raw("dims");
      if (!d.is_array()) throw UsageError(r.child("dims") + ": expected an array");
      c.theorem1.dims.clear();
      for (const auto& e : d) {
        if (!e.is_number_unsigned() || e.get<std::uint64_t>() == 0) {
          throw UsageError(r.child("dims") + ": entries must be positive integers");
        }
        c.theorem1.dims.push_back(e.get<std::size_t>());
      }
    }
    r.count("episodes", c.theorem1.episodes, 100, kMaxCount);
    r.real("beta", c.theorem1.beta, 0.0, 1.0, true);
    if (c.theorem1.beta >= 1.0) throw UsageError(r.child("beta") + ": must be < 1");
    r.count("n_way", c.theorem1.n_way, 2, 1000);
    r.count("k_shot", c.theorem1.k_shot, 1, 100000);
    r.count("q_target", c.theorem1.q_target, 1, 100000);
    r.real("class_sep", c.theorem1.class_sep, 0.0, kInf, true);
    r.real("query_offset", c.theorem1.query_offset, -kInf, kInf);
  });
  section(top, "lemma1", [&](ObjectReader& r) {
    r.count("samples", c.lemma1.samples, 1000, kMaxCount);
    r.real("beta", c.lemma1.beta, 0.0, 1.0, true);
    if (c.lemma1.beta >= 1.0) throw UsageError(r.child("beta") + ": must be < 1");
    if (r.has("cases")) {
      const json& cs = r.raw("cases");
      if (!cs.is_array() || cs.empty()) throw UsageError(r.child("cases") + ": expected a non-empty array");
      c.lemma1.cases.clear();
      for (std::size_t i = 0; i < cs.size(); ++i) {
        c.lemma1.cases.push_back(read_pair(cs[i], r.child("cases") + "/" + std::to_string(i)));
      }
    }
  });
  top.finish();
  c.validate();
  return c;
}

json config_to_json(const CliConfig& c) {
  json cases = json::array();
  for (const auto& g : c.lemma1.cases) {
    cases.push_back(json{{"mean_s", g.mean_s},
                         {"sd_s", g.sd_s},
                         {"mean_q", g.mean_q},
                         {"sd_q", g.sd_q},
                         {"sigma_s", g.sigma_s},
                         {"sigma_q", g.sigma_q}});
  }
  json train = train_config_to_json(c.train);
  train.erase("seed");
  return json{{"seed", c.seed},
              {"output_dir", c.output_dir},
              {"jobs", c.jobs},
              {"episodes", c.episodes},
              {"variant", c.variant},
              {"geometry", geometry_to_json(c.geometry)},
              {"pool", {{"classes", c.pool_classes}, {"size", c.pool_size}}},
              {"shift", shift_to_json(c.shift)},
              {"train", train},
              {"eval",
               {{"classifier", to_string(c.eval.classifier)},
                {"use_ot", c.eval.use_ot},
                {"beta", c.eval.beta},
                {"normalization", to_string(c.eval.normalization)},
                {"sinkhorn_tol", c.eval.sinkhorn_tol},
                {"sinkhorn_max_iter", c.eval.sinkhorn_max_iter}}},
              {"theorem1",
               {{"sigmas", c.theorem1.sigmas},
                {"dims", c.theorem1.dims},
                {"episodes", c.theorem1.episodes},
                {"beta", c.theorem1.beta},
                {"n_way", c.theorem1.n_way},
                {"k_shot", c.theorem1.k_shot},
                {"q_target", c.theorem1.q_target},
                {"class_sep", c.theorem1.class_sep},
                {"query_offset", c.theorem1.query_offset}}},
              {"lemma1", {{"samples", c.lemma1.samples}, {"beta", c.lemma1.beta}, {"cases", cases}}}};
}

CliConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const UsageError& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

}  // namespace pgada
