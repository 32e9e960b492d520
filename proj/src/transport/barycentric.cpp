#include <string>

#include "pgada/error.hpp"
#include "pgada/transport.hpp"

namespace pgada {

Matrix barycentric_map(const Matrix& plan, const Matrix& q_emb) {
  if (plan.cols() != q_emb.rows()) throw ShapeError("barycentric_map: plan columns != query rows");
  Matrix out(plan.rows(), q_emb.cols());
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    auto pr = plan.row(i);
    double mass = 0.0;
    for (double p : pr) mass += p;
    if (!(mass > 0.0)) throw DegeneratePlanError("barycentric_map: row " + std::to_string(i) + " carries no mass");
    auto orow = out.row(i);
    for (std::size_t j = 0; j < pr.size(); ++j) {
      if (pr[j] == 0.0) continue;
      const double w = pr[j] / mass;
      auto qr = q_emb.row(j);
      for (std::size_t t = 0; t < orow.size(); ++t) orow[t] += w * qr[t];
    }
  }
  return out;
}

Matrix barycentric_map(const TransportPlan& plan, const Matrix& q_emb) {
  return barycentric_map(plan.plan, q_emb);
}

}  // namespace pgada
