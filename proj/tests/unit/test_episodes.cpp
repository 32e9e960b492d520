#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pgada/core_math.hpp"
#include "pgada/episodes.hpp"
#include "pgada/error.hpp"

using namespace pgada;

namespace {

bool same_episode(const Episode& a, const Episode& b) {
  return a.support_x == b.support_x && a.support_y == b.support_y && a.query_x == b.query_x &&
         a.query_y == b.query_y && a.seed == b.seed && a.stream == b.stream;
}

Matrix random_rotation(RngStream& rng, std::size_t d) {
  Matrix q = gaussian_sample(rng, 0.0, 1.0, d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) dot += q(i, t) * q(k, t);
      for (std::size_t t = 0; t < d; ++t) q(i, t) -= dot * q(k, t);
    }
    double norm = 0.0;
    for (double v : q.row(i)) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : q.row(i)) v /= norm;
  }
  return q;
}

ModelStack identity_model(std::size_t dim) {
  ModelStack m;
  Layer l;
  l.weight = Matrix(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) l.weight(i, i) = 1.0;
  l.bias.assign(dim, 0.0);
  m.phi.push_back(l);
  m.theta = l;
  m.proj = l.weight;
  return m;
}

double mean_accuracy(const TaskGeometry& geo, const ShiftSpec& shift, const ModelStack& model,
                     const EvalConfig& cfg, std::size_t episodes, std::uint64_t seed) {
  double sum = 0.0;
  for (std::size_t i = 0; i < episodes; ++i) {
    RngStream rng(seed, i);
    sum += evaluate_episode(gen_task(geo, shift, rng), model, cfg).accuracy;
  }
  return sum / static_cast<double>(episodes);
}

}  // namespace

TEST_CASE("gen_task shapes follow the few-shot protocol") {
  RngStream rng(1, 0);
  const Episode one = gen_task(5, 1, 8, 16, 4.0, ShiftSpec{}, rng);
  CHECK(one.support_x.rows() == 5);
  CHECK(one.support_x.cols() == 16);
  CHECK(one.query_x.rows() == 40);
  CHECK(one.query_x.cols() == 16);

  const Episode five = gen_task(5, 5, 16, 16, 4.0, ShiftSpec{}, rng);
  CHECK(five.support_x.rows() == 25);
  CHECK(five.query_x.rows() == 80);

  CHECK_THROWS_AS(gen_task(0, 1, 8, 16, 4.0, ShiftSpec{}, rng), DomainError);
  CHECK_THROWS_AS(gen_task(5, 0, 8, 16, 4.0, ShiftSpec{}, rng), DomainError);
  CHECK_THROWS_AS(gen_task(5, 1, 0, 16, 4.0, ShiftSpec{}, rng), DomainError);
  CHECK_THROWS_AS(gen_task(5, 1, 8, 16, 0.0, ShiftSpec{}, rng), DomainError);
  ShiftSpec bad;
  bad.support_noise = -1.0;
  CHECK_THROWS_AS(gen_task(5, 1, 8, 16, 4.0, bad, rng), DomainError);
}

TEST_CASE("gen_task is deterministic and label balanced") {
  TaskGeometry geo;
  ShiftSpec shift;
  shift.query_noise = 0.5;
  shift.query.offset.assign(geo.input_dim, 1.0);
  RngStream a(7, 3);
  RngStream b(7, 3);
  CHECK(same_episode(gen_task(geo, shift, a), gen_task(geo, shift, b)));

  RngStream rng(8, 0);
  for (int trial = 0; trial < 50; ++trial) {
    geo.n_way = 2 + rng.below(5);
    geo.k_shot = 1 + rng.below(5);
    geo.q_target = 1 + rng.below(16);
    const Episode ep = gen_task(geo, ShiftSpec{}, rng);
    std::vector<std::size_t> sc(geo.n_way, 0), qc(geo.n_way, 0);
    for (int y : ep.support_y) ++sc.at(static_cast<std::size_t>(y));
    for (int y : ep.query_y) ++qc.at(static_cast<std::size_t>(y));
    for (std::size_t c = 0; c < geo.n_way; ++c) {
      CHECK(sc[c] == geo.k_shot);
      CHECK(qc[c] == geo.q_target);
    }
  }
}

TEST_CASE("widely separated clusters are classified perfectly") {
  RngStream rng(9, 0);
  const Episode ep = gen_task(5, 1, 8, 16, 100.0, ShiftSpec{}, rng);
  const Classification c = proto_classify(ep.support_x, ep.support_y, ep.query_x);
  CHECK(c.pred == ep.query_y);

  EvalConfig cfg;
  cfg.use_ot = false;
  CHECK(evaluate_episode(ep, identity_model(16), cfg).accuracy == 1.0);
}

TEST_CASE("proto_classify examples") {
  const std::vector<int> sy{0, 1};
  CHECK(proto_classify(Matrix{{0, 0}, {10, 10}}, sy, Matrix{{1, 1}}).pred == std::vector<int>{0});

  const std::vector<int> sy2{0, 0, 1};
  const Classification mean = proto_classify(Matrix{{0, 0}, {2, 2}, {5, 5}}, sy2, Matrix{{1, 1}, {3.1, 3.1}});
  CHECK(mean.pred == std::vector<int>{0, 1});

  const Classification tie = proto_classify(Matrix{{0, 0}, {2, 0}}, sy, Matrix{{1, 5}});
  CHECK(tie.pred == std::vector<int>{0});
  CHECK(std::abs(tie.prob(0, 0) - 0.5) < 1e-12);
  CHECK(std::abs(tie.prob(0, 1) - 0.5) < 1e-12);

  const std::vector<int> missing{0, 2};
  CHECK_THROWS_AS(proto_classify(Matrix{{0, 0}, {1, 1}}, missing, Matrix{{1, 1}}), DomainError);
}

TEST_CASE("matching_classify examples") {
  const std::vector<int> sy{0, 1};
  CHECK(matching_classify(Matrix{{1, 0}, {0, 1}}, sy, Matrix{{0, 3}}).pred == std::vector<int>{1});

  const Classification same = matching_classify(Matrix{{1, 1}, {1, 1}}, sy, Matrix{{3, -1}});
  CHECK(std::abs(same.prob(0, 0) - 0.5) < 1e-12);
  CHECK(same.pred == std::vector<int>{0});

  const Matrix s{{1, 2}, {-3, 1}, {0.5, -2}};
  const std::vector<int> sy3{0, 1, 2};
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const Matrix q{{s(i, 0), s(i, 1)}};
    CHECK(matching_classify(s, sy3, q).pred == std::vector<int>{static_cast<int>(i)});
  }
  CHECK_THROWS_AS(matching_classify(Matrix{{0, 0}, {1, 0}}, sy, Matrix{{1, 1}}), DomainError);
  CHECK_THROWS_AS(matching_classify(Matrix{{1, 0}, {0, 1}}, sy, Matrix{{0, 0}}), DomainError);
}

TEST_CASE("classifier invariances and normalized probabilities") {
  RngStream rng(10, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.below(5);
    const std::size_t n_way = 2 + rng.below(4);
    const std::size_t k = 1 + rng.below(3);
    const Matrix s = gaussian_sample(rng, 0.0, 2.0, n_way * k, d);
    std::vector<int> sy(n_way * k);
    for (std::size_t i = 0; i < sy.size(); ++i) sy[i] = static_cast<int>(i / k);
    const Matrix q = gaussian_sample(rng, 0.0, 2.0, 10, d);

    const Classification base = proto_classify(s, sy, q);
    const Matrix rot = random_rotation(rng, d);
    const Matrix shift = gaussian_sample(rng, 0.0, 5.0, 1, d);
    auto rigid = [&](const Matrix& x) {
      Matrix out = matmul_transb(x, rot);
      for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t t = 0; t < d; ++t) out(i, t) += shift(0, t);
      return out;
    };
    const Classification moved = proto_classify(rigid(s), sy, rigid(q));
    for (std::size_t i = 0; i < q.rows(); ++i) {
      std::vector<double> p(base.prob.row(i).begin(), base.prob.row(i).end());
      std::sort(p.rbegin(), p.rend());
      if (p[0] - p[1] < 1e-9) continue;
      CHECK(moved.pred[i] == base.pred[i]);
    }

    const Classification mbase = matching_classify(s, sy, q);
    Matrix s2 = s;
    Matrix q2 = q;
    for (std::size_t i = 0; i < s2.rows(); ++i) {
      const double c = rng.uniform(0.01, 100.0);
      for (double& v : s2.row(i)) v *= c;
    }
    for (std::size_t i = 0; i < q2.rows(); ++i) {
      const double c = rng.uniform(0.01, 100.0);
      for (double& v : q2.row(i)) v *= c;
    }
    CHECK(matching_classify(s2, sy, q2).pred == mbase.pred);

    for (const Classification* c : {&base, &mbase}) {
      for (std::size_t i = 0; i < q.rows(); ++i) {
        double sum = 0.0;
        for (double v : c->prob.row(i)) sum += v;
        CHECK(std::abs(sum - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("normalize_features modes") {
  RngStream rng(11, 0);
  const Matrix s = gaussian_sample(rng, 3.0, 2.0, 7, 4);
  const Matrix q = gaussian_sample(rng, -1.0, 0.5, 9, 4);

  const NormalizedPair none = normalize_features(s, q, Normalization::none);
  CHECK(none.support == s);
  CHECK(none.query == q);

  const NormalizedPair tbn = normalize_features(s, q, Normalization::transductive);
  const Matrix pooled = vstack(tbn.support, tbn.query);
  for (std::size_t t = 0; t < 4; ++t) {
    double mean = 0.0;
    for (std::size_t i = 0; i < pooled.rows(); ++i) mean += pooled(i, t);
    mean /= static_cast<double>(pooled.rows());
    double var = 0.0;
    for (std::size_t i = 0; i < pooled.rows(); ++i) var += (pooled(i, t) - mean) * (pooled(i, t) - mean);
    var /= static_cast<double>(pooled.rows());
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - 1.0) < 1e-6);
  }

  Matrix flat = s;
  for (std::size_t i = 0; i < flat.rows(); ++i) flat(i, 2) = 4.0;
  const NormalizedPair cbn = normalize_features(flat, q, Normalization::conventional);
  CHECK(cbn.support.all_finite());
  CHECK(cbn.query.all_finite());
  for (std::size_t i = 0; i < flat.rows(); ++i) CHECK(cbn.support(i, 2) == 0.0);
  const double expected = (q(0, 2) - 4.0) / std::sqrt(kVarianceFloor);
  CHECK(std::abs(cbn.query(0, 2) - expected) <= 1e-9 * std::abs(expected));

  CHECK_THROWS_AS(normalize_features(s, Matrix(3, 5), Normalization::transductive), ShapeError);
  CHECK_THROWS_AS(parse_normalization("batch"), UsageError);
  CHECK(parse_classifier(to_string(Classifier::matching)) == Classifier::matching);
}

TEST_CASE("near-identity transport leaves accuracy unchanged without shift") {
  TaskGeometry geo;
  geo.k_shot = 5;
  geo.q_target = 5;
  const ModelStack model = identity_model(geo.input_dim);
  EvalConfig with_ot;
  with_ot.beta = 0.99;
  EvalConfig without_ot = with_ot;
  without_ot.use_ot = false;
  const double a = mean_accuracy(geo, ShiftSpec{}, model, with_ot, 100, 12);
  const double b = mean_accuracy(geo, ShiftSpec{}, model, without_ot, 100, 12);
  MESSAGE("matched distributions: with OT " << a << ", without " << b);
  CHECK(std::abs(a - b) <= 0.02);
}

TEST_CASE("transport helps under a strong query-only offset") {
  TaskGeometry geo;
  RngStream init(13, 0);
  const ModelStack model = init_model(ModelShape{}, ModelHyper{}, init);
  ShiftSpec shift;
  shift.query.offset.assign(geo.input_dim, 2.0);
  EvalConfig with_ot;
  EvalConfig without_ot;
  without_ot.use_ot = false;
  const double a = mean_accuracy(geo, shift, model, with_ot, 200, 14);
  const double b = mean_accuracy(geo, shift, model, without_ot, 200, 14);
  MESSAGE("offset shift: with OT " << a << ", without " << b);
  CHECK(a > b);
}

TEST_CASE("evaluate_episode reports transport diagnostics") {
  TaskGeometry geo;
  RngStream rng(15, 0);
  const Episode ep = gen_task(geo, ShiftSpec{}, rng);
  const EpisodeResult r = evaluate_episode(ep, identity_model(geo.input_dim), EvalConfig{});
  CHECK(r.diag.converged);
  CHECK(r.diag.marginal_violation < 1e-9);
  CHECK(r.diag.transport_cost > 0.0);
  CHECK(r.diag.plan_entropy > 0.0);
  CHECK(r.plan.rows() == ep.support_x.rows());
  CHECK(r.plan.cols() == ep.query_x.rows());
  CHECK_THROWS_AS(evaluate_episode(ep, identity_model(3), EvalConfig{}), ShapeError);
}

TEST_CASE("unshifted support and query share class means") {
  TaskGeometry geo;
  std::vector<double> diffs;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    RngStream rng(16, i);
    const Episode ep = gen_task(geo, ShiftSpec{}, rng);
    double s = 0.0;
    double q = 0.0;
    for (std::size_t r = 0; r < geo.k_shot; ++r) s += ep.support_x(r, 0);
    for (std::size_t r = 0; r < geo.q_target; ++r) q += ep.query_x(r, 0);
    diffs.push_back(s / static_cast<double>(geo.k_shot) - q / static_cast<double>(geo.q_target));
  }
  double mean = 0.0;
  for (double d : diffs) mean += d;
  mean /= static_cast<double>(diffs.size());
  double var = 0.0;
  for (double d : diffs) var += (d - mean) * (d - mean);
  var /= static_cast<double>(diffs.size() - 1);
  const double t = mean / std::sqrt(var / static_cast<double>(diffs.size()));
  CHECK(std::abs(t) <= 4.0);
}

TEST_CASE("shift transforms") {
  SideTransform tr;
  tr.scale = {2.0, 1.0};
  tr.offset = {1.0, -1.0};
  tr.rotation = M_PI / 2.0;
  const Matrix out = tr.apply(Matrix{{1.0, 0.0}});
  CHECK(std::abs(out(0, 0) - 1.0) < 1e-12);
  CHECK(std::abs(out(0, 1) - 1.0) < 1e-12);
  CHECK(SideTransform{}.is_identity());
  SideTransform bad;
  bad.scale = {1.0, 0.0};
  CHECK_THROWS_AS(bad.validate(2), DomainError);
  CHECK_THROWS_AS(tr.validate(3), ShapeError);
}

TEST_CASE("JSON round trips") {
  TaskGeometry geo;
  geo.latent_dim = 4;
  geo.nuisance_spread = 0.1;
  geo.world_seed = 99;
  ShiftSpec shift;
  shift.query_noise = 0.3;
  shift.query.offset.assign(geo.input_dim, 0.7);
  shift.support.rotation = 0.25;
  RngStream rng(17, 2);
  const Episode ep = gen_task(geo, shift, rng);
  CHECK(same_episode(episode_from_json(episode_to_json(ep)), ep));

  const TaskGeometry g2 = geometry_from_json(geometry_to_json(geo));
  CHECK(geometry_to_json(g2) == geometry_to_json(geo));
  CHECK(shift_to_json(shift_from_json(shift_to_json(shift))) == shift_to_json(shift));

  RngStream prng(18, 0);
  const LabeledPool pool = gen_pool(geo, 6, 60, prng);
  const LabeledPool back = pool_from_json(pool_to_json(pool));
  CHECK(back.x == pool.x);
  CHECK(back.y == pool.y);
  CHECK(back.num_classes == 6);

  const EpisodeSet set{geo, shift, 21, 5};
  const EpisodeSet loaded = episode_set_from_json(episode_set_to_json(set, true));
  CHECK(loaded.count == 5);
  for (std::size_t i = 0; i < set.count; ++i) CHECK(same_episode(loaded.episode(i), set.episode(i)));
  CHECK_THROWS(episode_set_from_json(nlohmann::json{{"format", "something-else"}}));
}
