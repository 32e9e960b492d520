#include <cmath>
#include <string>

#include "pgada/diffnet.hpp"
#include "pgada/error.hpp"

namespace pgada {

std::string_view to_string(Activation act) {
  return act == Activation::tanh ? "tanh" : "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw UsageError("unknown activation '" + std::string(name) + "'");
}

std::size_t ModelStack::input_dim() const {
  if (phi.empty()) throw ShapeError("ModelStack: empty phi");
  return phi.front().in_dim();
}

std::size_t ModelStack::embed_dim() const {
  if (phi.empty()) throw ShapeError("ModelStack: empty phi");
  return phi.back().out_dim();
}

std::size_t ModelStack::num_classes() const { return theta.out_dim(); }

namespace {

void check_chain(const std::vector<Layer>& layers, const char* name) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    if (l.bias.size() != l.out_dim()) throw ShapeError(std::string(name) + ": bias length mismatch");
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      throw ShapeError(std::string(name) + ": layer " + std::to_string(i) + " does not chain");
    }
    require_finite(l.weight, name);
    require_finite(l.bias, name);
  }
}

Layer random_layer(std::size_t in, std::size_t out, Activation act, RngStream& rng) {
  Layer l;
  l.weight = Matrix(out, in);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : l.weight.data()) w = rng.normal(0.0, scale);
  l.bias.assign(out, 0.0);
  l.act = act;
  return l;
}

}  // namespace

void ModelStack::validate() const {
  if (phi.empty()) throw ShapeError("ModelStack: phi has no layers");
  check_chain(phi, "phi");
  check_chain({theta}, "theta");
  if (theta.in_dim() != embed_dim()) throw ShapeError("ModelStack: theta input != embedding dim");
  if (!gen.empty()) {
    check_chain(gen, "gen");
    if (gen.front().in_dim() != input_dim() || gen.back().out_dim() != input_dim()) {
      throw ShapeError("ModelStack: generator must map input dim to input dim");
    }
  }
  if (proj.cols() != embed_dim()) throw ShapeError("ModelStack: projection cols != embedding dim");
  require_finite(proj, "proj");
  if (!(epsilon > 0.0)) throw DomainError("ModelStack: epsilon must be > 0");
  if (!(rho >= 0.0)) throw DomainError("ModelStack: rho must be >= 0");
  if (!(tau > 0.0)) throw DomainError("ModelStack: tau must be > 0");
}

ModelStack init_model(const ModelShape& shape, const ModelHyper& hyper, RngStream& rng) {
  if (shape.input_dim == 0 || shape.hidden_dim == 0 || shape.embed_dim == 0 || shape.num_classes < 2 ||
      shape.proj_dim == 0) {
    throw DomainError("init_model: dimensions must be positive and num_classes >= 2");
  }
  ModelStack m;
  m.phi.push_back(random_layer(shape.input_dim, shape.hidden_dim, Activation::tanh, rng));
  m.phi.push_back(random_layer(shape.hidden_dim, shape.embed_dim, Activation::identity, rng));
  m.theta = random_layer(shape.embed_dim, shape.num_classes, Activation::identity, rng);
  m.gen.push_back(random_layer(shape.input_dim, shape.input_dim, Activation::tanh, rng));
  m.gen.push_back(random_layer(shape.input_dim, shape.input_dim, Activation::identity, rng));
  m.proj = random_layer(shape.embed_dim, shape.proj_dim, Activation::identity, rng).weight;
  m.rho = hyper.rho;
  m.epsilon = hyper.epsilon;
  m.tau = hyper.tau;
  m.validate();
  return m;
}

GradSet zero_grads(const ModelStack& m) {
  auto zero_like = [](const Layer& l) {
    return LayerGrad{Matrix(l.weight.rows(), l.weight.cols()), Vector(l.bias.size(), 0.0)};
  };
  GradSet g;
  for (const auto& l : m.phi) g.phi.push_back(zero_like(l));
  g.theta = zero_like(m.theta);
  for (const auto& l : m.gen) g.gen.push_back(zero_like(l));
  g.proj = Matrix(m.proj.rows(), m.proj.cols());
  return g;
}

namespace {

template <typename LayerVisitor, typename MatrixVisitor>
void visit_params(ParamSelection sel, std::size_t phi_n, std::size_t gen_n, LayerVisitor on_layer,
                  MatrixVisitor on_proj) {
  if (sel.phi)
    for (std::size_t i = 0; i < phi_n; ++i) on_layer(0, i);
  if (sel.theta) on_layer(1, 0);
  if (sel.gen)
    for (std::size_t i = 0; i < gen_n; ++i) on_layer(2, i);
  if (sel.proj) on_proj();
}

}  // namespace

Vector flatten_params(const ModelStack& m, ParamSelection sel) {
  Vector out;
  auto layer = [&](int group, std::size_t i) {
    const Layer& l = group == 0 ? m.phi[i] : group == 1 ? m.theta : m.gen[i];
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  };
  auto proj = [&] { out.insert(out.end(), m.proj.data().begin(), m.proj.data().end()); };
  visit_params(sel, m.phi.size(), m.gen.size(), layer, proj);
  return out;
}

void assign_params(ModelStack& m, std::span<const double> values, ParamSelection sel) {
  std::size_t pos = 0;
  auto take = [&](std::span<double> dst) {
    if (pos + dst.size() > values.size()) throw ShapeError("assign_params: value vector too short");
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(pos), dst.size(), dst.begin());
    pos += dst.size();
  };
  auto layer = [&](int group, std::size_t i) {
    Layer& l = group == 0 ? m.phi[i] : group == 1 ? m.theta : m.gen[i];
    take(l.weight.data());
    take(l.bias);
  };
  auto proj = [&] { take(m.proj.data()); };
  visit_params(sel, m.phi.size(), m.gen.size(), layer, proj);
  if (pos != values.size()) throw ShapeError("assign_params: value vector too long");
}

Vector flatten_grads(const GradSet& g, ParamSelection sel) {
  Vector out;
  auto layer = [&](int group, std::size_t i) {
    const LayerGrad& l = group == 0 ? g.phi[i] : group == 1 ? g.theta : g.gen[i];
    out.insert(out.end(), l.weight.data().begin(), l.weight.data().end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  };
  auto proj = [&] { out.insert(out.end(), g.proj.data().begin(), g.proj.data().end()); };
  visit_params(sel, g.phi.size(), g.gen.size(), layer, proj);
  return out;
}

void sgd_step(ModelStack& m, const GradSet& g, double eta, ParamSelection sel) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("sgd_step: eta must be finite and >= 0");
  auto update = [eta](std::span<double> p, std::span<const double> d) {
    if (p.size() != d.size()) throw ShapeError("sgd_step: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta * d[i];
  };
  auto layer_update = [&](Layer& l, const LayerGrad& d) {
    if (l.weight.rows() != d.weight.rows() || l.weight.cols() != d.weight.cols()) {
      throw ShapeError("sgd_step: weight gradient shape mismatch");
    }
    update(l.weight.data(), d.weight.data());
    update(l.bias, d.bias);
  };
  if (sel.phi) {
    if (g.phi.size() != m.phi.size()) throw ShapeError("sgd_step: phi layer count mismatch");
    for (std::size_t i = 0; i < m.phi.size(); ++i) layer_update(m.phi[i], g.phi[i]);
  }
  if (sel.theta) layer_update(m.theta, g.theta);
  if (sel.gen) {
    if (g.gen.size() != m.gen.size()) throw ShapeError("sgd_step: gen layer count mismatch");
    for (std::size_t i = 0; i < m.gen.size(); ++i) layer_update(m.gen[i], g.gen[i]);
  }
  if (sel.proj) {
    if (m.proj.rows() != g.proj.rows() || m.proj.cols() != g.proj.cols()) {
      throw ShapeError("sgd_step: projection gradient shape mismatch");
    }
    update(m.proj.data(), g.proj.data());
  }
}

}  // namespace pgada
