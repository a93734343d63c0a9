#include "debrec/unlearn.hpp"

#include <algorithm>
#include <cmath>

namespace debrec {

namespace {

void check_ids(const std::vector<std::size_t>& ids, std::size_t train_size,
               const char* who) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= train_size) {
      throw std::invalid_argument(std::string(who) + ": sample id out of range");
    }
    if (i > 0 && ids[i] <= ids[i - 1]) {
      throw std::invalid_argument(std::string(who) + ": ids must be ascending and unique");
    }
  }
}

}  // namespace

SampleSet remove_samples(const SampleSet& train, const std::vector<std::size_t>& unlearn_ids) {
  check_ids(unlearn_ids, train.size(), "remove_samples");
  SampleSet remain;
  remain.reserve(train.size() - unlearn_ids.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (next < unlearn_ids.size() && unlearn_ids[next] == i) {
      ++next;
      continue;
    }
    remain.push_back(train[i]);
  }
  return remain;
}

CGResult aggregate_unlearn_delta(const LinearOp& hvp_apply, const Vec& grad_sum, std::size_t n,
                                 const CGConfig& cfg, CostCounters* cost) {
  if (n == 0) throw std::invalid_argument("aggregate_unlearn_delta: n must be positive");
  CGResult res = solve_damped_cg(hvp_apply, grad_sum, cfg, cost);
  // delta = (1/n) (H + damping I)^{-1} sum grads; n is the full train size.
  res.x /= static_cast<double>(n);
  return res;
}

UnlearnResult compute_delta(const ModelState& model, const SampleSet& train,
                            const std::vector<std::size_t>& unlearn_ids, const CGConfig& cfg,
                            std::size_t threads, CostCounters* cost) {
  if (train.empty()) throw std::invalid_argument("compute_delta: empty training set");
  check_ids(unlearn_ids, train.size(), "compute_delta");
  if (unlearn_ids.size() == train.size()) {
    throw DegenerateError("compute_delta: unlearning every training sample leaves nothing");
  }

  UnlearnResult out;
  out.n = train.size();
  out.n_unlearn = unlearn_ids.size();
  out.damping = cfg.damping;

  const SampleSet remain = remove_samples(train, unlearn_ids);
  // Diagnostics outside the gradient-evaluation accounting.
  out.stationarity_before = mean_loss_and_grad(model, remain, threads).grad.norm();

  if (unlearn_ids.empty()) {
    out.delta = ParamVector::Zero(static_cast<Eigen::Index>(model.param_count()));
    out.stationarity_after = out.stationarity_before;
    return out;
  }

  Vec grad_sum = Vec::Zero(static_cast<Eigen::Index>(model.param_count()));
  std::vector<Vec> partial(block_count(unlearn_ids.size()));
  parallel_blocks(unlearn_ids.size(), threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
    Vec acc = Vec::Zero(static_cast<Eigen::Index>(model.param_count()));
    for (std::size_t i = begin; i < end; ++i) {
      acc += sample_loss_and_grad(model, train[unlearn_ids[i]]).grad;
    }
    partial[b] = std::move(acc);
  });
  for (const auto& acc : partial) grad_sum += acc;
  if (cost) cost->grad_evals += unlearn_ids.size();

  const HvpOperator op(model, train, threads);
  CGResult res = aggregate_unlearn_delta([&](const Vec& v) { return op.apply(v, cost); },
                                         grad_sum, train.size(), cfg, cost);
  out.delta = std::move(res.x);
  out.delta_norm = out.delta.norm();
  out.cg_iterations = res.iterations;
  out.cg_residual = res.relative_residual;

  const ModelState updated = apply_update(model, out.delta);
  out.stationarity_after = mean_loss_and_grad(updated, remain, threads).grad.norm();
  return out;
}

ModelState apply_update(const ModelState& model, const ParamVector& delta) {
  if (delta.size() != static_cast<Eigen::Index>(model.param_count())) {
    throw std::invalid_argument("apply_update: delta length mismatch");
  }
  ModelState out = model;
  ParamVector theta = out.params();
  theta += delta;
  out.set_params(theta);
  return out;
}

ModelState retrain_oracle(const SampleSet& train, std::size_t item_count,
                          const std::vector<std::size_t>& unlearn_ids, const TrainConfig& cfg,
                          std::size_t threads, CostCounters* cost, TrainStats* stats) {
  check_ids(unlearn_ids, train.size(), "retrain_oracle");
  if (unlearn_ids.size() == train.size()) {
    throw DegenerateError("retrain_oracle: remain set is empty");
  }
  if (unlearn_ids.empty()) {
    return train_backbone(train, item_count, cfg, threads, cost, stats);
  }
  const SampleSet remain = remove_samples(train, unlearn_ids);
  return train_backbone(remain, item_count, cfg, threads, cost, stats);
}

GapReport gap_report(const ModelState& unlearned, const ModelState& retrained,
                     const SampleSet& remain, const SampleSet& test,
                     const PopularityTable& pop, const GroupAssignment& groups,
                     const EvalConfig& cfg, std::size_t threads) {
  if (unlearned.param_count() != retrained.param_count()) {
    throw std::invalid_argument("gap_report: model shapes differ");
  }
  const EvalReport eu = evaluate_model(unlearned, test, pop, groups, cfg, threads);
  const EvalReport er = evaluate_model(retrained, test, pop, groups, cfg, threads);

  GapReport out;
  for (std::size_t i = 0; i < eu.rows.size(); ++i) {
    const MetricRow& u = eu.rows[i];
    const MetricRow& r = er.rows[i];
    const std::string suffix = "@" + std::to_string(u.k);
    auto push = [&](const std::string& name, double uv, double rv) {
      out.rows.push_back({name + suffix, uv, rv, uv - rv});
    };
    push("hr", u.hr, r.hr);
    push("ndcg", u.ndcg, r.ndcg);
    push("arp", u.arp, r.arp);
    push("apt", u.apt, r.apt);
    push("hd", u.hd, r.hd);
    push("dp", u.dp, r.dp);
    push("f_pop", u.f_pop, r.f_pop);
    push("f_attr", u.f_attr, r.f_attr);
  }
  out.param_distance = (unlearned.params() - retrained.params()).norm();
  out.stationarity_unlearned = mean_loss_and_grad(unlearned, remain, threads).grad.norm();
  out.stationarity_retrained = mean_loss_and_grad(retrained, remain, threads).grad.norm();
  return out;
}

std::vector<std::size_t> random_unlearn_baseline(std::size_t train_size, std::size_t size,
                                                 std::uint64_t seed) {
  if (size > train_size) {
    throw std::invalid_argument("random_unlearn_baseline: size exceeds training set");
  }
  Rng rng(seed);
  return rng.sample_without_replacement(train_size, size);
}

}  // namespace debrec
