#include <fstream>
#include <sstream>
#include <string>

#include "pgada/checkpoint.hpp"
#include "pgada/error.hpp"

namespace pgada {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j, const char* what) {
  try {
    const auto rows = j.at("rows").get<std::size_t>();
    const auto cols = j.at("cols").get<std::size_t>();
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != rows * cols) throw ShapeError(std::string(what) + ": data length != rows * cols");
    return Matrix(rows, cols, std::move(data));
  } catch (const json::exception& e) {
    throw IoError(std::string(what) + ": " + e.what());
  }
}

namespace {

json layer_to_json(const Layer& l) {
  return json{{"weight", matrix_to_json(l.weight)}, {"bias", l.bias}, {"activation", to_string(l.act)}};
}

Layer layer_from_json(const json& j, const char* what) {
  Layer l;
  l.weight = matrix_from_json(j.at("weight"), what);
  l.bias = j.at("bias").get<Vector>();
  l.act = parse_activation(j.at("activation").get<std::string>());
  return l;
}

}  // namespace

json model_to_json(const ModelStack& m) {
  json j;
  j["format"] = "pgada-model";
  j["version"] = 1;
  j["hyper"] = {{"rho", m.rho}, {"epsilon", m.epsilon}, {"tau", m.tau}};
  j["phi"] = json::array();
  for (const auto& l : m.phi) j["phi"].push_back(layer_to_json(l));
  j["theta"] = layer_to_json(m.theta);
  j["gen"] = json::array();
  for (const auto& l : m.gen) j["gen"].push_back(layer_to_json(l));
  j["proj"] = matrix_to_json(m.proj);
  return j;
}

ModelStack model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "pgada-model") throw IoError("not a pgada model document");
    ModelStack m;
    for (const auto& l : j.at("phi")) m.phi.push_back(layer_from_json(l, "phi"));
    m.theta = layer_from_json(j.at("theta"), "theta");
    for (const auto& l : j.at("gen")) m.gen.push_back(layer_from_json(l, "gen"));
    m.proj = matrix_from_json(j.at("proj"), "proj");
    const json& h = j.at("hyper");
    m.rho = h.at("rho").get<double>();
    m.epsilon = h.at("epsilon").get<double>();
    m.tau = h.at("tau").get<double>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("model checkpoint: ") + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void save_checkpoint(const std::filesystem::path& path, const ModelStack& m, const json& state) {
  json doc{{"model", model_to_json(m)}, {"state", state}};
  write_text_file(path, doc.dump(1) + "\n");
}

ModelStack load_checkpoint(const std::filesystem::path& path, json* state) {
  const json doc = read_json_file(path);
  if (!doc.contains("model")) throw IoError(path.string() + ": missing 'model'");
  ModelStack m = model_from_json(doc.at("model"));
  if (state) *state = doc.value("state", json::object());
  return m;
}

}  // namespace pgada
