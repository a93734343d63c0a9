#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Cholesky>

#include "debrec/unlearn.hpp"
#include "helpers.hpp"

using namespace debrec;
namespace dt = debrec::testing;

namespace {

// Quadratic fixture where the one-step update is exact. Remain samples share
// one SPD curvature A with per-sample linear terms; unlearn samples are purely
// linear (zero curvature), so removing them leaves the full-risk Hessian
// H = ((n-u)/n) A unchanged and the first-order step lands on the remain
// minimizer identically (to solver tolerance).
struct QuadraticFixture {
  Mat a;               // shared remain curvature, p x p SPD
  Mat b;               // n x p per-sample linear coefficients, loss_k has -b_k.theta
  std::vector<std::size_t> unlearn;

  std::size_t n() const { return static_cast<std::size_t>(b.rows()); }

  bool is_unlearn(std::size_t k) const {
    return std::find(unlearn.begin(), unlearn.end(), k) != unlearn.end();
  }

  // Mean-loss Hessian over the full set: only remain samples carry curvature.
  Mat full_hessian() const {
    const double frac = static_cast<double>(n() - unlearn.size()) / static_cast<double>(n());
    return frac * a;
  }

  Vec full_minimizer() const {
    Vec bbar = Vec::Zero(a.rows());
    for (std::size_t k = 0; k < n(); ++k) bbar += b.row(static_cast<Eigen::Index>(k)).transpose();
    bbar /= static_cast<double>(n());
    return Eigen::LLT<Mat>(full_hessian()).solve(bbar);
  }

  Vec remain_minimizer() const {
    Vec bbar = Vec::Zero(a.rows());
    std::size_t remain = 0;
    for (std::size_t k = 0; k < n(); ++k) {
      if (is_unlearn(k)) continue;
      bbar += b.row(static_cast<Eigen::Index>(k)).transpose();
      ++remain;
    }
    bbar /= static_cast<double>(remain);
    return Eigen::LLT<Mat>(a).solve(bbar);
  }

  // gradient of loss_k at theta: A theta - b_k for remain, -b_k for unlearn.
  Vec unlearn_grad_sum() const {
    Vec sum = Vec::Zero(a.rows());
    for (const auto k : unlearn) sum -= b.row(static_cast<Eigen::Index>(k)).transpose();
    return sum;
  }
};

QuadraticFixture make_quadratic(std::uint64_t seed, Eigen::Index p, std::size_t n,
                                std::vector<std::size_t> unlearn) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  QuadraticFixture f;
  f.a = dt::random_spd(gen, p);
  f.b.resize(static_cast<Eigen::Index>(n), p);
  for (Eigen::Index i = 0; i < f.b.rows(); ++i)
    for (Eigen::Index j = 0; j < p; ++j) f.b(i, j) = normal(gen);
  f.unlearn = std::move(unlearn);
  return f;
}

}  // namespace

TEST_CASE("one-step update is exact on the zero-curvature-unlearn quadratic") {
  const auto f = make_quadratic(3, 12, 20, {2, 5, 11, 17});
  const Mat h = f.full_hessian();
  const Vec theta_hat = f.full_minimizer();
  const Vec grad_sum = f.unlearn_grad_sum();

  CGConfig cfg;
  cfg.damping = 0.0;  // exactness requires the undamped solve
  cfg.tol = 1e-12;
  cfg.max_iter = 500;
  const auto res = aggregate_unlearn_delta([&](const Vec& v) { return Vec(h * v); }, grad_sum,
                                           f.n(), cfg);
  CHECK(res.converged);
  const Vec theta_star = theta_hat + res.x;
  const Vec theta_remain = f.remain_minimizer();
  CHECK(dt::rel_error(theta_star, theta_remain) <= 1e-9);

  // The remain risk gradient vanishes at the updated point.
  Vec bbar_r = Vec::Zero(12);
  for (std::size_t k = 0; k < f.n(); ++k) {
    if (!f.is_unlearn(k)) bbar_r += f.b.row(static_cast<Eigen::Index>(k)).transpose();
  }
  bbar_r /= static_cast<double>(f.n() - f.unlearn.size());
  CHECK((f.a * theta_star - bbar_r).norm() <= 1e-8);
}

TEST_CASE("aggregate delta divides the solve by the full training size") {
  const auto f = make_quadratic(7, 8, 15, {0, 14});
  const Mat h = f.full_hessian();
  const Vec grad_sum = f.unlearn_grad_sum();
  CGConfig cfg;
  cfg.damping = 1e-3;
  cfg.tol = 1e-12;
  const auto res = aggregate_unlearn_delta([&](const Vec& v) { return Vec(h * v); }, grad_sum,
                                           15, cfg);
  const Vec dense =
      Eigen::LLT<Mat>(h + 1e-3 * Mat::Identity(8, 8)).solve(grad_sum) / 15.0;
  CHECK(dt::rel_error(res.x, dense) <= 1e-9);

  CHECK_THROWS_AS(aggregate_unlearn_delta([&](const Vec& v) { return Vec(h * v); }, grad_sum, 0,
                                          cfg),
                  std::invalid_argument);
}

TEST_CASE("deltas add over disjoint unlearn sets") {
  const auto f = make_quadratic(11, 10, 18, {});
  const Mat h = f.a;  // treat every sample as sharing curvature here
  CGConfig cfg;
  cfg.damping = 1e-2;
  cfg.tol = 1e-12;

  auto delta_of = [&](const std::vector<std::size_t>& ids) {
    Vec sum = Vec::Zero(10);
    for (const auto k : ids) sum -= f.b.row(static_cast<Eigen::Index>(k)).transpose();
    return aggregate_unlearn_delta([&](const Vec& v) { return Vec(h * v); }, sum, 18, cfg).x;
  };
  const Vec d1 = delta_of({1, 4});
  const Vec d2 = delta_of({7, 9, 16});
  const Vec d12 = delta_of({1, 4, 7, 9, 16});
  CHECK(dt::rel_error(d12, Vec(d1 + d2)) <= 1e-8);
}

TEST_CASE("compute_delta matches the dense influence formula on the real model") {
  const auto model = dt::random_model(21, 3, 10, 1e-2);
  const auto train = dt::random_samples(22, 50, 10);
  const std::vector<std::size_t> ids = {3, 17, 30, 44};

  CGConfig cfg;
  cfg.damping = 1e-3;
  cfg.tol = 1e-10;
  CostCounters cost;
  const auto result = compute_delta(model, train, ids, cfg, 1, &cost);
  CHECK(result.n == 50);
  CHECK(result.n_unlearn == 4);
  CHECK(result.damping == cfg.damping);
  CHECK(result.delta_norm == doctest::Approx(result.delta.norm()).epsilon(1e-15));

  Vec grad_sum = Vec::Zero(9);
  for (const auto k : ids) grad_sum += sample_loss_and_grad(model, train[k]).grad;
  const Mat h = exact_hessian(model, train);
  const Vec dense = Eigen::LLT<Mat>(h + cfg.damping * Mat::Identity(9, 9)).solve(grad_sum) / 50.0;
  CHECK(dt::rel_error(result.delta, dense) <= 1e-7);

  // Cost: one gradient per unlearn sample plus the CG passes; the
  // stationarity diagnostics must not be billed.
  CHECK(cost.grad_evals == ids.size());
  CHECK(cost.cg_iterations == result.cg_iterations);
  CHECK(cost.hvp_passes == result.cg_iterations);
}

TEST_CASE("compute_delta with an empty unlearn set is a no-op") {
  const auto model = dt::random_model(31, 3, 8);
  const auto train = dt::random_samples(32, 20, 8);
  CostCounters cost;
  const auto result = compute_delta(model, train, {}, CGConfig{}, 1, &cost);
  CHECK(result.n_unlearn == 0);
  CHECK(result.delta.norm() == 0.0);
  CHECK(result.delta_norm == 0.0);
  CHECK(result.cg_iterations == 0);
  CHECK(result.stationarity_after == result.stationarity_before);
  CHECK(cost.grad_evals == 0);
  CHECK(cost.hvp_passes == 0);
}

TEST_CASE("compute_delta validates the unlearn ids") {
  const auto model = dt::random_model(41, 3, 8);
  const auto train = dt::random_samples(42, 10, 8);
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), 0);
  CHECK_THROWS_AS(compute_delta(model, train, all, CGConfig{}), DegenerateError);
  CHECK_THROWS_AS(compute_delta(model, train, {10}, CGConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(compute_delta(model, train, {4, 2}, CGConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(compute_delta(model, train, {4, 4}, CGConfig{}), std::invalid_argument);
  CHECK_THROWS_AS(compute_delta(model, SampleSet{}, {}, CGConfig{}), std::invalid_argument);
}

TEST_CASE("unlearning from the optimum improves remain stationarity") {
  const auto seed_model = dt::random_model(51, 3, 12, 1e-2);
  const auto train = dt::random_samples(52, 120, 12);
  const auto model = dt::newton_minimize(seed_model, train);
  REQUIRE(mean_loss_and_grad(model, train).grad.norm() <= 1e-10);

  CGConfig cfg;
  cfg.damping = 1e-4;
  cfg.tol = 1e-10;
  const std::vector<std::size_t> ids = {5, 40, 41, 77, 102, 119};
  const auto result = compute_delta(model, train, ids, cfg);
  CHECK(result.stationarity_before > 0.0);
  CHECK(result.stationarity_after < result.stationarity_before);
  // The remain gradient shrinks by an order of magnitude on this fixture.
  CHECK(result.stationarity_after < 0.2 * result.stationarity_before);
}

TEST_CASE("apply_update adds the delta without touching its inputs") {
  const auto model = dt::random_model(61, 3, 8);
  const Mat before = model.adapter;
  ParamVector delta = ParamVector::LinSpaced(9, -0.4, 0.4);
  const auto updated = apply_update(model, delta);
  CHECK(model.adapter == before);
  CHECK(updated.params() == model.params() + delta);
  CHECK(updated.item_emb == model.item_emb);
  CHECK(updated.d == model.d);
  CHECK(updated.reg == model.reg);

  // delta = -theta zeroes the adapter.
  const auto zeroed = apply_update(model, ParamVector(-model.params()));
  CHECK(zeroed.adapter.cwiseAbs().maxCoeff() == 0.0);

  ParamVector bad(4);
  CHECK_THROWS_AS(apply_update(model, bad), std::invalid_argument);
}

TEST_CASE("remove_samples preserves order and validates") {
  const auto train = dt::random_samples(71, 8, 6);
  const auto remain = remove_samples(train, {1, 5});
  REQUIRE(remain.size() == 6);
  CHECK(remain[0].timestamp == train[0].timestamp);
  CHECK(remain[1].timestamp == train[2].timestamp);
  CHECK(remain[2].timestamp == train[3].timestamp);
  CHECK(remain[3].timestamp == train[4].timestamp);
  CHECK(remain[4].timestamp == train[6].timestamp);
  CHECK(remain[5].timestamp == train[7].timestamp);
  CHECK(remove_samples(train, {}).size() == 8);
  CHECK_THROWS_AS(remove_samples(train, {8}), std::invalid_argument);
  CHECK_THROWS_AS(remove_samples(train, {3, 3}), std::invalid_argument);
}

TEST_CASE("retrain_oracle with no removals reproduces the backbone bitwise") {
  const auto train = dt::random_samples(81, 40, 10);
  TrainConfig cfg;
  cfg.d = 3;
  cfg.epochs = 60;
  cfg.seed = 9;
  const auto backbone = train_backbone(train, 10, cfg);
  const auto oracle = retrain_oracle(train, 10, {}, cfg);
  CHECK(model_fingerprint(oracle) == model_fingerprint(backbone));
}

TEST_CASE("retrain_oracle equals training on the filtered set") {
  const auto train = dt::random_samples(91, 40, 10);
  TrainConfig cfg;
  cfg.d = 3;
  cfg.epochs = 80;
  cfg.seed = 9;
  const std::vector<std::size_t> ids = {0, 19, 39};
  const auto oracle = retrain_oracle(train, 10, ids, cfg);
  const auto direct = train_backbone(remove_samples(train, ids), 10, cfg);
  CHECK(model_fingerprint(oracle) == model_fingerprint(direct));

  std::vector<std::size_t> all(40);
  std::iota(all.begin(), all.end(), 0);
  CHECK_THROWS_AS(retrain_oracle(train, 10, all, cfg), DegenerateError);
}

TEST_CASE("random_unlearn_baseline is deterministic, sized, ascending") {
  const auto b1 = random_unlearn_baseline(100, 12, 7);
  const auto b2 = random_unlearn_baseline(100, 12, 7);
  CHECK(b1 == b2);
  REQUIRE(b1.size() == 12);
  for (std::size_t i = 0; i < b1.size(); ++i) {
    CHECK(b1[i] < 100);
    if (i > 0) CHECK(b1[i] > b1[i - 1]);
  }
  CHECK(random_unlearn_baseline(100, 12, 8) != b1);
  CHECK(random_unlearn_baseline(5, 5, 1) == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(random_unlearn_baseline(5, 0, 1).empty());
  CHECK_THROWS_AS(random_unlearn_baseline(5, 6, 1), std::invalid_argument);
}

TEST_CASE("gap_report lays out metric rows and distances") {
  const auto m1 = dt::random_model(101, 3, 10);
  const auto m2 = dt::random_model(102, 3, 10);
  const auto test = dt::random_samples(103, 15, 10);
  const auto remain = dt::random_samples(104, 30, 10);
  const auto pop = compute_popularity(remain, 10);
  GroupAssignment groups;
  groups.label0 = "A";
  groups.label1 = "B";
  groups.group.resize(7);
  for (std::size_t u = 0; u < 7; ++u) groups.group[u] = static_cast<int>(u % 2);

  EvalConfig cfg;
  cfg.ks = {5, 10};
  const auto gap = gap_report(m1, m2, remain, test, pop, groups, cfg);
  REQUIRE(gap.rows.size() == 16);  // 8 metrics x 2 Ks
  CHECK(gap.rows[0].metric == "hr@5");
  CHECK(gap.rows[8].metric == "hr@10");
  CHECK(gap.rows[15].metric == "f_attr@10");
  for (const auto& row : gap.rows) {
    if (std::isnan(row.gap)) continue;
    CHECK(row.gap == doctest::Approx(row.unlearned - row.retrained).epsilon(1e-15));
  }
  CHECK(gap.param_distance ==
        doctest::Approx((m1.params() - m2.params()).norm()).epsilon(1e-12));
  CHECK(gap.stationarity_unlearned ==
        doctest::Approx(mean_loss_and_grad(m1, remain).grad.norm()).epsilon(1e-12));

  const auto m_small = dt::random_model(105, 2, 10);
  CHECK_THROWS_AS(gap_report(m1, m_small, remain, test, pop, groups, cfg),
                  std::invalid_argument);
}
