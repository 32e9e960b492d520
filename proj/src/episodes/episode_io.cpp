#include <string>

#include "pgada/checkpoint.hpp"
#include "pgada/episodes.hpp"
#include "pgada/error.hpp"

namespace pgada {

using nlohmann::json;

namespace {

json side_to_json(const SideTransform& t) {
  return json{{"scale", t.scale}, {"offset", t.offset}, {"rotation", t.rotation}};
}

SideTransform side_from_json(const json& j) {
  SideTransform t;
  t.scale = j.value("scale", Vector{});
  t.offset = j.value("offset", Vector{});
  t.rotation = j.value("rotation", 0.0);
  return t;
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw IoError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

json shift_to_json(const ShiftSpec& s) {
  return json{{"support_noise", s.support_noise},
              {"query_noise", s.query_noise},
              {"support_transform", side_to_json(s.support)},
              {"query_transform", side_to_json(s.query)}};
}

ShiftSpec shift_from_json(const json& j) {
  return guarded("shift spec", [&] {
    ShiftSpec s;
    s.support_noise = j.value("support_noise", 0.0);
    s.query_noise = j.value("query_noise", 0.0);
    if (j.contains("support_transform")) s.support = side_from_json(j.at("support_transform"));
    if (j.contains("query_transform")) s.query = side_from_json(j.at("query_transform"));
    return s;
  });
}

json geometry_to_json(const TaskGeometry& g) {
  return json{{"n_way", g.n_way},         {"k_shot", g.k_shot},
              {"q_target", g.q_target},   {"input_dim", g.input_dim},
              {"class_sep", g.class_sep}, {"spread", g.spread},
              {"latent_dim", g.latent_dim}, {"nuisance_spread", g.nuisance_spread},
              {"world_seed", g.world_seed}};
}

TaskGeometry geometry_from_json(const json& j) {
  return guarded("task geometry", [&] {
    TaskGeometry g;
    g.n_way = j.at("n_way").get<std::size_t>();
    g.k_shot = j.at("k_shot").get<std::size_t>();
    g.q_target = j.at("q_target").get<std::size_t>();
    g.input_dim = j.at("input_dim").get<std::size_t>();
    g.class_sep = j.at("class_sep").get<double>();
    g.spread = j.value("spread", 1.0);
    g.latent_dim = j.value("latent_dim", std::size_t{0});
    g.nuisance_spread = j.value("nuisance_spread", 0.0);
    g.world_seed = j.value("world_seed", std::uint64_t{0});
    g.validate();
    return g;
  });
}

json episode_to_json(const Episode& ep) {
  return json{{"n_way", ep.n_way},
              {"k_shot", ep.k_shot},
              {"q_target", ep.q_target},
              {"seed", ep.seed},
              {"stream", ep.stream},
              {"shift", shift_to_json(ep.shift)},
              {"support_x", matrix_to_json(ep.support_x)},
              {"support_y", ep.support_y},
              {"query_x", matrix_to_json(ep.query_x)},
              {"query_y", ep.query_y}};
}

Episode episode_from_json(const json& j) {
  return guarded("episode", [&] {
    Episode ep;
    ep.n_way = j.at("n_way").get<std::size_t>();
    ep.k_shot = j.at("k_shot").get<std::size_t>();
    ep.q_target = j.at("q_target").get<std::size_t>();
    ep.seed = j.at("seed").get<std::uint64_t>();
    ep.stream = j.at("stream").get<std::uint64_t>();
    ep.shift = shift_from_json(j.at("shift"));
    ep.support_x = matrix_from_json(j.at("support_x"), "support_x");
    ep.support_y = j.at("support_y").get<std::vector<int>>();
    ep.query_x = matrix_from_json(j.at("query_x"), "query_x");
    ep.query_y = j.at("query_y").get<std::vector<int>>();
    if (ep.support_y.size() != ep.support_x.rows() || ep.query_y.size() != ep.query_x.rows()) {
      throw ShapeError("episode: label count does not match rows");
    }
    if (ep.support_x.rows() != ep.n_way * ep.k_shot || ep.query_x.rows() != ep.n_way * ep.q_target) {
      throw ShapeError("episode: row counts do not match n_way/k_shot/q_target");
    }
    return ep;
  });
}

json pool_to_json(const LabeledPool& p) {
  return json{{"format", "pgada-pool"}, {"num_classes", p.num_classes}, {"x", matrix_to_json(p.x)}, {"y", p.y}};
}

LabeledPool pool_from_json(const json& j) {
  return guarded("pool", [&] {
    if (j.value("format", std::string()) != "pgada-pool") throw IoError("not a pgada pool document");
    LabeledPool p;
    p.num_classes = j.at("num_classes").get<std::size_t>();
    p.x = matrix_from_json(j.at("x"), "pool x");
    p.y = j.at("y").get<std::vector<int>>();
    if (p.y.size() != p.x.rows()) throw ShapeError("pool: label count != rows");
    for (int y : p.y)
      if (y < 0 || static_cast<std::size_t>(y) >= p.num_classes) throw DomainError("pool: label out of range");
    return p;
  });
}

Episode EpisodeSet::episode(std::size_t index) const {
  if (index >= count) throw UsageError("episode index out of range");
  RngStream rng(seed, index);
  return gen_task(geometry, shift, rng);
}

json episode_set_to_json(const EpisodeSet& set, bool include_data) {
  json j{{"format", "pgada-episodes"},
         {"geometry", geometry_to_json(set.geometry)},
         {"shift", shift_to_json(set.shift)},
         {"seed", set.seed},
         {"count", set.count}};
  json specs = json::array();
  for (std::size_t i = 0; i < set.count; ++i) specs.push_back(json{{"index", i}, {"seed", set.seed}, {"stream", i}});
  j["episodes"] = std::move(specs);
  if (include_data) {
    json data = json::array();
    for (std::size_t i = 0; i < set.count; ++i) data.push_back(episode_to_json(set.episode(i)));
    j["data"] = std::move(data);
  }
  return j;
}

EpisodeSet episode_set_from_json(const json& j) {
  return guarded("episode set", [&] {
    if (j.value("format", std::string()) != "pgada-episodes") throw IoError("not a pgada episode-set document");
    EpisodeSet set;
    set.geometry = geometry_from_json(j.at("geometry"));
    set.shift = shift_from_json(j.at("shift"));
    set.shift.validate(set.geometry.input_dim);
    set.seed = j.at("seed").get<std::uint64_t>();
    set.count = j.at("count").get<std::size_t>();
    return set;
  });
}

}  // namespace pgada
