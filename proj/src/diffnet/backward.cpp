#include <cmath>
#include <string>

#include "pgada/core_math.hpp"
#include "pgada/diffnet.hpp"
#include "pgada/error.hpp"

namespace pgada {

namespace {

struct MlpTrace {
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> acts;    // act(pre) before any noise mask
  Matrix output;
};

Matrix affine(const Layer& l, const Matrix& x) {
  if (x.cols() != l.in_dim()) {
    throw ShapeError("layer expects " + std::to_string(l.in_dim()) + " inputs, got " +
                     std::to_string(x.cols()));
  }
  Matrix out = matmul_transb(x, l.weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      r[j] += l.bias[j];
      if (l.act == Activation::tanh) r[j] = std::tanh(r[j]);
    }
  }
  return out;
}

// masks, when given, multiply the output of every layer except the last.
MlpTrace mlp_forward(const std::vector<Layer>& layers, const Matrix& x,
                     const std::vector<Matrix>* masks) {
  MlpTrace tr;
  Matrix cur = x;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    tr.inputs.push_back(cur);
    Matrix a = affine(layers[li], cur);
    tr.acts.push_back(a);
    if (masks && li + 1 < layers.size()) {
      const Matrix& mk = (*masks)[li];
      if (mk.rows() != a.rows() || mk.cols() != a.cols()) throw ShapeError("generator noise mask shape mismatch");
      for (std::size_t k = 0; k < a.size(); ++k) a.data()[k] *= mk.data()[k];
    }
    cur = std::move(a);
  }
  tr.output = std::move(cur);
  return tr;
}

// Accumulates parameter gradients into `acc` and returns dL/dx.
Matrix mlp_backward(const std::vector<Layer>& layers, const MlpTrace& tr, Matrix grad,
                    std::vector<LayerGrad>& acc, const std::vector<Matrix>* masks) {
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer& l = layers[li];
    if (masks && li + 1 < layers.size()) {
      const Matrix& mk = (*masks)[li];
      for (std::size_t k = 0; k < grad.size(); ++k) grad.data()[k] *= mk.data()[k];
    }
    if (l.act == Activation::tanh) {
      const Matrix& a = tr.acts[li];
      for (std::size_t k = 0; k < grad.size(); ++k) grad.data()[k] *= 1.0 - a.data()[k] * a.data()[k];
    }
    Matrix dw = matmul_transa(grad, tr.inputs[li]);
    LayerGrad& g = acc[li];
    for (std::size_t k = 0; k < dw.size(); ++k) g.weight.data()[k] += dw.data()[k];
    for (std::size_t i = 0; i < grad.rows(); ++i) {
      auto r = grad.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) g.bias[j] += r[j];
    }
    grad = matmul(grad, l.weight);
  }
  return grad;
}

struct GeneratorTrace {
  MlpTrace delta;
  Matrix raw_delta;
  Vector scale;  // 1 when inside the ball, sqrt(eps)/||delta|| otherwise
  Matrix xp;
};

GeneratorTrace generator_trace(const ModelStack& m, const Matrix& x, const GeneratorNoise& noise) {
  if (m.gen.empty()) throw ShapeError("generator_forward: model has no generator layers");
  if (x.cols() != m.gen.front().in_dim()) throw ShapeError("generator_forward: input dim mismatch");
  if (noise.masks.size() + 1 != m.gen.size()) throw ShapeError("generator_forward: noise mask count mismatch");
  GeneratorTrace tr;
  tr.delta = mlp_forward(m.gen, x, &noise.masks);
  tr.raw_delta = tr.delta.output;
  tr.scale.assign(x.rows(), 1.0);
  tr.xp = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto dr = tr.raw_delta.row(i);
    double sq = 0.0;
    for (double v : dr) sq += v * v;
    if (sq > m.epsilon) tr.scale[i] = std::sqrt(m.epsilon / sq);
    auto xr = tr.xp.row(i);
    for (std::size_t t = 0; t < xr.size(); ++t) xr[t] += tr.scale[i] * dr[t];
  }
  return tr;
}

// dL/d(raw delta) from dL/dxp through the radial projection.
Matrix projection_backward(const GeneratorTrace& tr, const Matrix& grad_xp) {
  Matrix g = grad_xp;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    if (tr.scale[i] == 1.0) continue;
    auto dr = tr.raw_delta.row(i);
    auto gr = g.row(i);
    double sq = 0.0;
    double dot = 0.0;
    for (std::size_t t = 0; t < dr.size(); ++t) {
      sq += dr[t] * dr[t];
      dot += dr[t] * gr[t];
    }
    for (std::size_t t = 0; t < dr.size(); ++t) gr[t] = tr.scale[i] * (gr[t] - dr[t] * dot / sq);
  }
  return g;
}

Matrix interleave(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * 2, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::copy_n(a.row(i).begin(), a.cols(), out.row(2 * i).begin());
    std::copy_n(b.row(i).begin(), b.cols(), out.row(2 * i + 1).begin());
  }
  return out;
}

void scale_in_place(Matrix& m, double s) {
  for (double& v : m.data()) v *= s;
}

void add_into(Matrix& dst, const Matrix& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) dst.data()[k] += src.data()[k];
}

}  // namespace

Matrix forward_embed(const ModelStack& m, const Matrix& x) {
  if (m.phi.empty()) throw ShapeError("forward_embed: model has no phi layers");
  Matrix out = mlp_forward(m.phi, x, nullptr).output;
  require_finite(out, "forward_embed");
  return out;
}

Matrix forward_logits(const ModelStack& m, const Matrix& x) {
  return affine(m.theta, forward_embed(m, x));
}

GeneratorNoise draw_generator_noise(const ModelStack& m, std::size_t rows, RngStream& rng) {
  GeneratorNoise noise;
  for (std::size_t li = 0; li + 1 < m.gen.size(); ++li) {
    Matrix mk = gaussian_sample(rng, 0.0, 1.0, rows, m.gen[li].out_dim());
    for (double& v : mk.data()) v = 1.0 + m.rho * v;
    noise.masks.push_back(std::move(mk));
  }
  return noise;
}

Matrix generator_forward(const ModelStack& m, const Matrix& x, const GeneratorNoise& noise) {
  Matrix xp = generator_trace(m, x, noise).xp;
  require_finite(xp, "generator_forward");
  return xp;
}

Matrix generator_forward(const ModelStack& m, const Matrix& x, RngStream& rng) {
  return generator_forward(m, x, draw_generator_noise(m, x.rows(), rng));
}

EmbedDistance embed_distance_loss(const ModelStack& m, const Matrix& x, const Matrix& xp) {
  if (x.rows() != xp.rows() || x.cols() != xp.cols()) throw ShapeError("embed_distance_loss: x/xp shape mismatch");
  if (x.rows() == 0) throw ShapeError("embed_distance_loss: empty batch");
  const MlpTrace tx = mlp_forward(m.phi, x, nullptr);
  const MlpTrace tp = mlp_forward(m.phi, xp, nullptr);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  Matrix diff = tp.output;
  double loss = 0.0;
  for (std::size_t k = 0; k < diff.size(); ++k) {
    diff.data()[k] -= tx.output.data()[k];
    loss += diff.data()[k] * diff.data()[k];
  }
  loss *= inv_n;
  Matrix g = diff;
  scale_in_place(g, 2.0 * inv_n);
  Matrix gneg = g;
  scale_in_place(gneg, -1.0);
  EmbedDistance out;
  out.loss = loss;
  out.grads = zero_grads(m);
  out.grad_xp = mlp_backward(m.phi, tp, g, out.grads.phi, nullptr);
  mlp_backward(m.phi, tx, gneg, out.grads.phi, nullptr);
  return out;
}

LossSelector parse_loss_selector(std::string_view name) {
  if (name == "ori") return LossSelector::ori;
  if (name == "adv") return LossSelector::adv;
  if (name == "self") return LossSelector::self;
  if (name == "embed_distance") return LossSelector::embed_distance;
  if (name == "generator_objective") return LossSelector::generator_objective;
  if (name == "combined") return LossSelector::combined;
  throw UsageError("unknown loss selector '" + std::string(name) + "'");
}

LossWeights weights_for(LossSelector sel, double lambda1, double lambda2, double kl_weight) {
  switch (sel) {
    case LossSelector::ori: return {1.0, 0.0, 0.0, 0.0};
    case LossSelector::adv: return {0.0, 1.0, 0.0, 0.0};
    case LossSelector::self: return {0.0, 0.0, 1.0, 0.0};
    case LossSelector::embed_distance: return {0.0, 0.0, 0.0, 1.0};
    case LossSelector::generator_objective: return {0.0, kl_weight, 0.0, -1.0};
    case LossSelector::combined: return {1.0, lambda1, lambda2, 0.0};
  }
  throw UsageError("unknown loss selector");
}

BatchNoise draw_batch_noise(const ModelStack& m, std::size_t rows, double ssl_jitter, RngStream& rng) {
  BatchNoise noise;
  RngStream gen_rng = rng.derive(1);
  RngStream jitter_rng = rng.derive(2);
  noise.gen = draw_generator_noise(m, rows, gen_rng);
  noise.jitter_a = gaussian_sample(jitter_rng, 0.0, ssl_jitter, rows, m.input_dim());
  noise.jitter_b = gaussian_sample(jitter_rng, 0.0, ssl_jitter, rows, m.input_dim());
  return noise;
}

BackwardResult backward(const ModelStack& m, const LossWeights& w, const Matrix& x,
                        std::span<const int> y, const BatchNoise& noise) {
  if (x.cols() != m.input_dim()) throw ShapeError("backward: input dim mismatch");
  if (y.size() != x.rows()) throw ShapeError("backward: label count mismatch");
  BackwardResult res;
  res.grads = zero_grads(m);
  GradSet& g = res.grads;
  std::vector<LayerGrad> theta_acc{g.theta};

  const MlpTrace tx = mlp_forward(m.phi, x, nullptr);
  const MlpTrace tth = mlp_forward({m.theta}, tx.output, nullptr);
  LossGrad ce = cross_entropy(tth.output, y);
  res.losses.ori = ce.loss;
  Matrix grad_hx(x.rows(), m.embed_dim());
  if (w.ori != 0.0) {
    scale_in_place(ce.grad, w.ori);
    add_into(grad_hx, mlp_backward({m.theta}, tth, ce.grad, theta_acc, nullptr));
  }

  const GeneratorTrace gt = generator_trace(m, x, noise.gen);
  const MlpTrace tp = mlp_forward(m.phi, gt.xp, nullptr);
  const MlpTrace tpth = mlp_forward({m.theta}, tp.output, nullptr);
  LossGrad ce_p = cross_entropy(tpth.output, y);
  res.losses.adv = ce_p.loss;
  Matrix grad_hp(x.rows(), m.embed_dim());
  if (w.adv != 0.0) {
    scale_in_place(ce_p.grad, w.adv);
    add_into(grad_hp, mlp_backward({m.theta}, tpth, ce_p.grad, theta_acc, nullptr));
  }

  const double inv_n = 1.0 / static_cast<double>(x.rows());
  Matrix diff = tp.output;
  for (std::size_t k = 0; k < diff.size(); ++k) {
    diff.data()[k] -= tx.output.data()[k];
    res.losses.dist += diff.data()[k] * diff.data()[k] * inv_n;
  }
  if (w.dist != 0.0) {
    scale_in_place(diff, 2.0 * inv_n * w.dist);
    add_into(grad_hp, diff);
    scale_in_place(diff, -1.0);
    add_into(grad_hx, diff);
  }

  mlp_backward(m.phi, tx, grad_hx, g.phi, nullptr);
  if (w.adv != 0.0 || w.dist != 0.0) {
    const Matrix grad_xp = mlp_backward(m.phi, tp, grad_hp, g.phi, nullptr);
    const Matrix grad_delta = projection_backward(gt, grad_xp);
    mlp_backward(m.gen, gt.delta, grad_delta, g.gen, &noise.gen.masks);
  }

  if (noise.jitter_a.rows() != x.rows() || noise.jitter_b.rows() != x.rows()) {
    throw ShapeError("backward: SSL jitter shape mismatch");
  }
  Matrix view_a = x;
  Matrix view_b = x;
  add_into(view_a, noise.jitter_a);
  add_into(view_b, noise.jitter_b);
  const MlpTrace ta = mlp_forward(m.phi, view_a, nullptr);
  const MlpTrace tb = mlp_forward(m.phi, view_b, nullptr);
  const Matrix h = interleave(ta.output, tb.output);
  const Matrix z = matmul_transb(h, m.proj);
  LossGrad nt = ntxent_loss(z, m.tau);
  res.losses.self = nt.loss;
  if (w.self != 0.0) {
    scale_in_place(nt.grad, w.self);
    add_into(g.proj, matmul_transa(nt.grad, h));
    const Matrix grad_h = matmul(nt.grad, m.proj);
    Matrix ga(x.rows(), m.embed_dim());
    Matrix gb(x.rows(), m.embed_dim());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::copy_n(grad_h.row(2 * i).begin(), ga.cols(), ga.row(i).begin());
      std::copy_n(grad_h.row(2 * i + 1).begin(), gb.cols(), gb.row(i).begin());
    }
    mlp_backward(m.phi, ta, ga, g.phi, nullptr);
    mlp_backward(m.phi, tb, gb, g.phi, nullptr);
  }

  g.theta = std::move(theta_acc.front());
  res.losses.total = w.ori * res.losses.ori + w.adv * res.losses.adv + w.self * res.losses.self +
                     w.dist * res.losses.dist;
  if (!std::isfinite(res.losses.total)) throw NumericError("backward: non-finite loss");
  return res;
}

}  // namespace pgada
