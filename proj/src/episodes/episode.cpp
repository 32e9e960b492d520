#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pgada/core_math.hpp"
#include "pgada/episodes.hpp"
#include "pgada/error.hpp"

namespace pgada {

bool SideTransform::is_identity() const {
  return rotation == 0.0 && std::all_of(scale.begin(), scale.end(), [](double s) { return s == 1.0; }) &&
         std::all_of(offset.begin(), offset.end(), [](double o) { return o == 0.0; });
}

void SideTransform::validate(std::size_t dim) const {
  if (!scale.empty() && scale.size() != dim) {
    throw ShapeError("transform scale has " + std::to_string(scale.size()) + " entries, expected " +
                     std::to_string(dim));
  }
  if (!offset.empty() && offset.size() != dim) {
    throw ShapeError("transform offset has " + std::to_string(offset.size()) + " entries, expected " +
                     std::to_string(dim));
  }
  for (double s : scale)
    if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("transform scale entries must be finite and > 0");
  require_finite(offset, "transform offset");
  if (!std::isfinite(rotation)) throw DomainError("transform rotation must be finite");
  if (rotation != 0.0 && dim < 2) throw DomainError("rotation needs at least 2 dimensions");
}

Matrix SideTransform::apply(const Matrix& x) const {
  validate(x.cols());
  Matrix out = x;
  const double cr = std::cos(rotation);
  const double sr = std::sin(rotation);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    if (!scale.empty())
      for (std::size_t t = 0; t < r.size(); ++t) r[t] *= scale[t];
    if (rotation != 0.0) {
      const double a = r[0];
      const double b = r[1];
      r[0] = cr * a - sr * b;
      r[1] = sr * a + cr * b;
    }
    if (!offset.empty())
      for (std::size_t t = 0; t < r.size(); ++t) r[t] += offset[t];
  }
  return out;
}

void ShiftSpec::validate(std::size_t dim) const {
  if (!(support_noise >= 0.0) || !std::isfinite(support_noise)) throw DomainError("support_noise must be >= 0");
  if (!(query_noise >= 0.0) || !std::isfinite(query_noise)) throw DomainError("query_noise must be >= 0");
  support.validate(dim);
  query.validate(dim);
}

void TaskGeometry::validate() const {
  if (n_way < 2) throw DomainError("n_way must be >= 2");
  if (k_shot < 1 || q_target < 1) throw DomainError("k_shot and q_target must be >= 1");
  if (input_dim < 1) throw DomainError("input_dim must be >= 1");
  if (!(class_sep > 0.0) || !std::isfinite(class_sep)) throw DomainError("class_sep must be > 0");
  if (!(spread >= 0.0) || !std::isfinite(spread)) throw DomainError("spread must be >= 0");
  if (!(nuisance_spread >= 0.0) || !std::isfinite(nuisance_spread)) throw DomainError("nuisance_spread must be >= 0");
  if (latent_dim > input_dim) throw DomainError("latent_dim must not exceed input_dim");
}

namespace {

// Orthonormal p x L basis, fixed by the world seed.
Matrix world_basis(const TaskGeometry& geo) {
  RngStream rng(geo.world_seed, 0x776f726c64ULL);
  Matrix g = gaussian_sample(rng, 0.0, 1.0, geo.latent_dim, geo.input_dim);
  // Gram-Schmidt on rows, then transpose to columns.
  for (std::size_t k = 0; k < g.rows(); ++k) {
    auto rk = g.row(k);
    for (std::size_t j = 0; j < k; ++j) {
      auto rj = g.row(j);
      double dot = 0.0;
      for (std::size_t t = 0; t < rk.size(); ++t) dot += rk[t] * rj[t];
      for (std::size_t t = 0; t < rk.size(); ++t) rk[t] -= dot * rj[t];
    }
    double nrm = 0.0;
    for (double v : rk) nrm += v * v;
    nrm = std::sqrt(nrm);
    if (!(nrm > 1e-12)) throw NumericError("world basis: degenerate draw");
    for (double& v : rk) v /= nrm;
  }
  return g.transposed();
}

class World {
 public:
  explicit World(const TaskGeometry& geo) : geo_(geo) {
    geo_.validate();
    if (geo_.latent_dim > 0) basis_ = world_basis(geo_);
  }

  Matrix class_means(std::size_t classes, RngStream& rng) const {
    const std::size_t k = geo_.latent_dim > 0 ? geo_.latent_dim : geo_.input_dim;
    Matrix u = gaussian_sample(rng, 0.0, 1.0, classes, k);
    for (std::size_t c = 0; c < classes; ++c) {
      auto r = u.row(c);
      double nrm = 0.0;
      for (double v : r) nrm += v * v;
      nrm = std::sqrt(nrm);
      if (!(nrm > 0.0)) throw NumericError("class mean draw has zero norm");
      for (double& v : r) v *= geo_.class_sep / nrm;
    }
    return geo_.latent_dim > 0 ? matmul_transb(u, basis_) : u;
  }

  // Rows of class `labels[i]` around `means`.
  Matrix sample(const Matrix& means, std::span<const int> labels, RngStream& rng) const {
    const std::size_t n = labels.size();
    const std::size_t p = geo_.input_dim;
    Matrix out(n, p);
    if (geo_.latent_dim > 0) {
      Matrix z = gaussian_sample(rng, 0.0, geo_.spread, n, geo_.latent_dim);
      out = matmul_transb(z, basis_);
      if (geo_.nuisance_spread > 0.0) {
        Matrix e = gaussian_sample(rng, 0.0, geo_.nuisance_spread, n, p);
        for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] += e.data()[k];
      }
    } else {
      out = gaussian_sample(rng, 0.0, geo_.spread, n, p);
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto mr = means.row(static_cast<std::size_t>(labels[i]));
      auto r = out.row(i);
      for (std::size_t t = 0; t < p; ++t) r[t] += mr[t];
    }
    return out;
  }

 private:
  TaskGeometry geo_;
  Matrix basis_;
};

void add_noise(Matrix& x, double sigma, RngStream& rng) {
  if (sigma == 0.0) return;
  Matrix e = gaussian_sample(rng, 0.0, sigma, x.rows(), x.cols());
  for (std::size_t k = 0; k < x.size(); ++k) x.data()[k] += e.data()[k];
}

std::vector<int> grouped_labels(std::size_t classes, std::size_t per_class) {
  std::vector<int> y(classes * per_class);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i / per_class);
  return y;
}

}  // namespace

Episode gen_task(const TaskGeometry& geo, const ShiftSpec& shift, RngStream& rng) {
  const World world(geo);
  shift.validate(geo.input_dim);
  Episode ep;
  ep.seed = rng.seed();
  ep.stream = rng.stream_id();
  ep.n_way = geo.n_way;
  ep.k_shot = geo.k_shot;
  ep.q_target = geo.q_target;
  ep.shift = shift;
  ep.support_y = grouped_labels(geo.n_way, geo.k_shot);
  ep.query_y = grouped_labels(geo.n_way, geo.q_target);

  const Matrix means = world.class_means(geo.n_way, rng);
  ep.support_x = shift.support.apply(world.sample(means, ep.support_y, rng));
  ep.query_x = shift.query.apply(world.sample(means, ep.query_y, rng));
  add_noise(ep.support_x, shift.support_noise, rng);
  add_noise(ep.query_x, shift.query_noise, rng);
  return ep;
}

Episode gen_task(std::size_t n_way, std::size_t k_shot, std::size_t q_target, std::size_t p,
                 double class_sep, const ShiftSpec& shift, RngStream& rng) {
  TaskGeometry geo;
  geo.n_way = n_way;
  geo.k_shot = k_shot;
  geo.q_target = q_target;
  geo.input_dim = p;
  geo.class_sep = class_sep;
  return gen_task(geo, shift, rng);
}

LabeledPool gen_pool(const TaskGeometry& geo, std::size_t classes, std::size_t rows, RngStream& rng) {
  if (classes < 2) throw DomainError("gen_pool: need at least 2 classes");
  if (rows < classes) throw DomainError("gen_pool: fewer rows than classes");
  const World world(geo);
  LabeledPool pool;
  pool.num_classes = classes;
  pool.y.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) pool.y[i] = static_cast<int>(i % classes);
  for (std::size_t i = rows; i-- > 1;) std::swap(pool.y[i], pool.y[rng.below(i + 1)]);
  const Matrix means = world.class_means(classes, rng);
  pool.x = world.sample(means, pool.y, rng);
  return pool;
}

}  // namespace pgada
