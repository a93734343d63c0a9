#include "debrec/influence.hpp"

#include <cmath>
#include <cstring>

namespace debrec {

CGResult solve_damped_cg(const LinearOp& apply_a, const Vec& b, const CGConfig& cfg,
                         CostCounters* cost) {
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("solve_damped_cg: tol must be positive");
  if (cfg.damping < 0.0) throw std::invalid_argument("solve_damped_cg: negative damping");

  CGResult res;
  res.x = Vec::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  Vec r = b;
  Vec p = b;
  double rs = r.squaredNorm();
  for (std::size_t it = 0; it < cfg.max_iter; ++it) {
    Vec ap = apply_a(p);
    if (cfg.damping != 0.0) ap += cfg.damping * p;
    const double pap = p.dot(ap);
    if (!std::isfinite(pap)) throw SolverError("solve_damped_cg: non-finite curvature", it);
    if (pap <= 0.0) throw SolverError("solve_damped_cg: non-positive curvature", it);
    const double alpha = rs / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    const double rs_new = r.squaredNorm();
    if (!std::isfinite(rs_new)) throw SolverError("solve_damped_cg: non-finite residual", it);
    if (cost) cost->cg_iterations += 1;
    res.iterations = it + 1;
    res.relative_residual = std::sqrt(rs_new) / bnorm;
    if (res.relative_residual <= cfg.tol) {
      res.converged = true;
      return res;
    }
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return res;
}

InfluenceVector precompute_influence_vector(const ModelState& model, const SampleSet& train,
                                            const BiasValue& bias, const CGConfig& cfg,
                                            std::size_t threads, CostCounters* cost) {
  if (bias.grad.size() != static_cast<Eigen::Index>(model.param_count())) {
    throw AlignmentError("precompute_influence_vector: bias gradient length mismatch");
  }
  const HvpOperator op(model, train, threads);
  InfluenceVector iv;
  CGResult res = solve_damped_cg([&](const Vec& v) { return op.apply(v, cost); }, bias.grad,
                                 cfg, cost);
  iv.s = std::move(res.x);
  res.x = Vec();
  iv.cg = std::move(res);
  return iv;
}

std::string influence_fingerprint(const ModelState& model, const BiasSpec& spec,
                                  const CGConfig& cfg) {
  std::uint64_t h = model_fingerprint(model);
  auto mix = [&h](const void* data, std::size_t size) { h = fnv1a64(data, size, h); };
  const auto kind = static_cast<std::int32_t>(spec.kind);
  mix(&kind, sizeof(kind));
  mix(&spec.alpha, sizeof(spec.alpha));
  mix(&cfg.damping, sizeof(cfg.damping));
  mix(&cfg.tol, sizeof(cfg.tol));
  const auto iters = static_cast<std::uint64_t>(cfg.max_iter);
  mix(&iters, sizeof(iters));
  return to_hex(h);
}

InfluenceCache influence_scores(const ModelState& model, const SampleSet& train,
                                const CandidateSet& candidates, const InfluenceVector& iv,
                                const BiasSpec& spec, const CGConfig& cfg,
                                std::size_t threads, CostCounters* cost) {
  if (candidates.ids.empty()) throw std::invalid_argument("influence_scores: no candidates");
  if (iv.s.size() != static_cast<Eigen::Index>(model.param_count())) {
    throw AlignmentError("influence_scores: influence vector length mismatch");
  }
  for (std::size_t i = 0; i < candidates.ids.size(); ++i) {
    if (candidates.ids[i] >= train.size()) {
      throw std::invalid_argument("influence_scores: candidate id out of range");
    }
    if (i > 0 && candidates.ids[i] <= candidates.ids[i - 1]) {
      throw std::invalid_argument("influence_scores: candidate ids must be ascending and unique");
    }
  }

  InfluenceCache cache;
  cache.fingerprint = influence_fingerprint(model, spec, cfg);
  cache.entries.resize(candidates.ids.size());
  parallel_blocks(candidates.ids.size(), threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      const std::size_t id = candidates.ids[i];
                      const LossGrad lg = sample_loss_and_grad(model, train[id]);
                      InfluenceEntry e;
                      e.sample_id = id;
                      e.influence = -iv.s.dot(lg.grad);
                      e.loss = lg.loss;
                      e.grad_norm = lg.grad.norm();
                      cache.entries[i] = e;
                    }
                  });
  if (cost) cost->grad_evals += candidates.ids.size();
  return cache;
}

}  // namespace debrec
