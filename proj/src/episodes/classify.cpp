#include <algorithm>
#include <cmath>
#include <string>

#include "pgada/core_math.hpp"
#include "pgada/episodes.hpp"
#include "pgada/error.hpp"

namespace pgada {

namespace {

std::size_t class_count(const Matrix& s_emb, std::span<const int> s_y, const Matrix& q_emb) {
  if (s_y.size() != s_emb.rows()) throw ShapeError("classify: support label count != support rows");
  if (s_emb.cols() != q_emb.cols()) throw ShapeError("classify: support/query embedding dims differ");
  if (s_y.empty()) throw DomainError("classify: empty support set");
  int top = -1;
  for (int y : s_y) {
    if (y < 0) throw DomainError("classify: negative support label");
    top = std::max(top, y);
  }
  return static_cast<std::size_t>(top) + 1;
}

// Row-wise softmax of scores; argmax keeps the first maximum.
Classification softmax_decide(const Matrix& scores) {
  Classification out{std::vector<int>(scores.rows()), Matrix(scores.rows(), scores.cols())};
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto s = scores.row(i);
    const auto best = std::max_element(s.begin(), s.end());
    out.pred[i] = static_cast<int>(best - s.begin());
    double z = 0.0;
    for (double v : s) z += std::exp(v - *best);
    auto p = out.prob.row(i);
    for (std::size_t c = 0; c < s.size(); ++c) p[c] = std::exp(s[c] - *best) / z;
  }
  return out;
}

Vector unit_rows_norms(const Matrix& x, const char* what) {
  Vector n(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    n[i] = std::sqrt(s);
    if (!(n[i] > 0.0)) throw DomainError(std::string("matching_classify: zero-norm ") + what + " row " + std::to_string(i));
  }
  return n;
}

}  // namespace

Classification proto_classify(const Matrix& s_emb, std::span<const int> s_y, const Matrix& q_emb) {
  const std::size_t classes = class_count(s_emb, s_y, q_emb);
  Matrix protos(classes, s_emb.cols());
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < s_emb.rows(); ++i) {
    const auto c = static_cast<std::size_t>(s_y[i]);
    ++counts[c];
    auto pr = protos.row(c);
    auto sr = s_emb.row(i);
    for (std::size_t t = 0; t < pr.size(); ++t) pr[t] += sr[t];
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) throw DomainError("proto_classify: class " + std::to_string(c) + " has no support rows");
    for (double& v : protos.row(c)) v /= static_cast<double>(counts[c]);
  }
  Matrix scores = pairwise_sq_dist(q_emb, protos);
  for (double& v : scores.data()) v = -v;
  return softmax_decide(scores);
}

Classification matching_classify(const Matrix& s_emb, std::span<const int> s_y, const Matrix& q_emb) {
  const std::size_t classes = class_count(s_emb, s_y, q_emb);
  const Vector sn = unit_rows_norms(s_emb, "support");
  const Vector qn = unit_rows_norms(q_emb, "query");
  const Matrix dots = matmul_transb(q_emb, s_emb);
  Matrix scores(q_emb.rows(), classes, -2.0);
  std::vector<bool> seen(classes, false);
  for (int y : s_y) seen[static_cast<std::size_t>(y)] = true;
  for (std::size_t c = 0; c < classes; ++c)
    if (!seen[c]) throw DomainError("matching_classify: class " + std::to_string(c) + " has no support rows");
  for (std::size_t i = 0; i < q_emb.rows(); ++i) {
    for (std::size_t j = 0; j < s_emb.rows(); ++j) {
      const double cosv = dots(i, j) / (qn[i] * sn[j]);
      double& best = scores(i, static_cast<std::size_t>(s_y[j]));
      best = std::max(best, cosv);
    }
  }
  return softmax_decide(scores);
}

std::string_view to_string(Normalization n) {
  switch (n) {
    case Normalization::transductive: return "transductive";
    case Normalization::conventional: return "conventional";
    case Normalization::none: return "none";
  }
  return "none";
}

std::string_view to_string(Classifier c) { return c == Classifier::proto ? "proto" : "matching"; }

Normalization parse_normalization(std::string_view name) {
  if (name == "transductive") return Normalization::transductive;
  if (name == "conventional") return Normalization::conventional;
  if (name == "none") return Normalization::none;
  throw UsageError("unknown normalization '" + std::string(name) + "'");
}

Classifier parse_classifier(std::string_view name) {
  if (name == "proto") return Classifier::proto;
  if (name == "matching") return Classifier::matching;
  throw UsageError("unknown classifier '" + std::string(name) + "'");
}

}  // namespace pgada
