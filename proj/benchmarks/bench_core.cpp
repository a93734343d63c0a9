#include <benchmark/benchmark.h>

#include <random>

#include "debrec/fairness.hpp"
#include "debrec/influence.hpp"
#include "debrec/model.hpp"

namespace {

using namespace debrec;

ModelState make_model(std::uint32_t d, std::uint32_t items, std::uint64_t seed = 3) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  ModelState m;
  m.d = d;
  m.item_count = items;
  m.reg = 1e-3;
  m.seed = seed;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  m.item_emb.resize(items, d);
  for (std::uint32_t i = 0; i < items; ++i)
    for (std::uint32_t j = 0; j < d; ++j) m.item_emb(i, j) = unif(gen) * scale;
  m.adapter = Mat::Identity(d, d);
  for (std::uint32_t i = 0; i < d; ++i)
    for (std::uint32_t j = 0; j < d; ++j) m.adapter(i, j) += 0.2 * unif(gen);
  return m;
}

SampleSet make_samples(std::size_t n, std::uint32_t items, std::uint64_t seed = 5) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::uint32_t> item(0, items - 1);
  std::uniform_int_distribution<std::size_t> hist(1, 8);
  SampleSet samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    samples[i].user = static_cast<std::uint32_t>(i % 97);
    samples[i].history.resize(hist(gen));
    for (auto& h : samples[i].history) h = item(gen);
    samples[i].target = item(gen);
    samples[i].timestamp = static_cast<std::int64_t>(i);
  }
  return samples;
}

void BM_ItemDistribution(benchmark::State& state) {
  const auto items = static_cast<std::uint32_t>(state.range(0));
  const auto model = make_model(16, items);
  const auto samples = make_samples(64, items);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(item_distribution(model, samples[i++ % samples.size()]));
  }
}
BENCHMARK(BM_ItemDistribution)->Arg(100)->Arg(1000);

void BM_MeanLossGrad(benchmark::State& state) {
  const auto model = make_model(16, 300);
  const auto samples = make_samples(static_cast<std::size_t>(state.range(0)), 300);
  for (auto _ : state) {
    benchmark::DoNotOptimize(mean_loss_and_grad(model, samples));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MeanLossGrad)->Arg(512)->Arg(4096);

void BM_HvpApply(benchmark::State& state) {
  const auto model = make_model(16, 300);
  const auto samples = make_samples(static_cast<std::size_t>(state.range(0)), 300);
  const HvpOperator op(model, samples);
  Vec v = Vec::Ones(model.param_count()).normalized();
  for (auto _ : state) {
    v = op.apply(v);
    v.normalize();
    benchmark::DoNotOptimize(v);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_HvpApply)->Arg(512)->Arg(4096);

void BM_SolveCG(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 gen(11);
  std::normal_distribution<double> normal;
  Mat g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = normal(gen);
  const Mat a = g * g.transpose() / static_cast<double>(n) + Mat::Identity(n, n);
  Vec b(n);
  for (Eigen::Index i = 0; i < n; ++i) b[i] = normal(gen);
  CGConfig cfg;
  cfg.damping = 1e-3;
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_damped_cg([&](const Vec& v) { return Vec(a * v); }, b, cfg));
  }
}
BENCHMARK(BM_SolveCG)->Arg(64)->Arg(256);

void BM_EvaluateModel(benchmark::State& state) {
  const auto model = make_model(16, 300);
  const auto test = make_samples(static_cast<std::size_t>(state.range(0)), 300, 17);
  const auto train = make_samples(2000, 300, 19);
  const auto pop = compute_popularity(train, 300);
  const auto groups = [] {
    InteractionLog log;
    for (int u = 0; u < 97; ++u) log.user_ids.push_back("u");
    return empty_groups(log);
  }();
  EvalConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(evaluate_model(model, test, pop, groups, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EvaluateModel)->Arg(256);

void BM_InfluencePrecompute(benchmark::State& state) {
  const auto model = make_model(8, 200);
  const auto train = make_samples(static_cast<std::size_t>(state.range(0)), 200);
  const auto pop = compute_popularity(train, 200);
  const auto groups = [] {
    InteractionLog log;
    for (int u = 0; u < 97; ++u) log.user_ids.push_back("u");
    return empty_groups(log);
  }();
  const auto bias = evaluate_bias(model, train, pop, groups, BiasSpec{});
  CGConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(precompute_influence_vector(model, train, bias, cfg));
  }
}
BENCHMARK(BM_InfluencePrecompute)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
