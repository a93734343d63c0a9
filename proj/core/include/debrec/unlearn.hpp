#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "debrec/common.hpp"
#include "debrec/cost.hpp"
#include "debrec/dataset.hpp"
#include "debrec/fairness.hpp"
#include "debrec/influence.hpp"
#include "debrec/model.hpp"

namespace debrec {

struct UnlearnResult {
  ParamVector delta;
  std::size_t n = 0;          // full training-set size; the 1/n factor uses this
  std::size_t n_unlearn = 0;
  double delta_norm = 0.0;
  std::size_t cg_iterations = 0;
  double cg_residual = 0.0;
  double damping = 0.0;
  double stationarity_before = 0.0;  // ||mean grad over remain|| at theta
  double stationarity_after = 0.0;   // same at theta + delta
};

// Core step shared with the quadratic closed-form tests: solves
// (H + damping*I) y = sum of unlearn-sample gradients, returns delta = y / n.
// n is the full training-set size, never the remain size.
CGResult aggregate_unlearn_delta(const LinearOp& hvp_apply, const Vec& grad_sum,
                                 std::size_t n, const CGConfig& cfg,
                                 CostCounters* cost = nullptr);

// One-step unlearning update for the mask-selected training samples.
// unlearn_ids must be unique, in range, and leave a non-empty remain set.
UnlearnResult compute_delta(const ModelState& model, const SampleSet& train,
                            const std::vector<std::size_t>& unlearn_ids, const CGConfig& cfg,
                            std::size_t threads = 1, CostCounters* cost = nullptr);

// New model with adapter + delta (row-major); inputs untouched.
ModelState apply_update(const ModelState& model, const ParamVector& delta);

// Retrains from the backbone's init (same seed, same frozen embeddings) on
// train minus unlearn_ids, order preserved. Empty unlearn_ids reproduces the
// backbone bitwise.
ModelState retrain_oracle(const SampleSet& train, std::size_t item_count,
                          const std::vector<std::size_t>& unlearn_ids, const TrainConfig& cfg,
                          std::size_t threads = 1, CostCounters* cost = nullptr,
                          TrainStats* stats = nullptr);

struct GapRow {
  std::string metric;  // e.g. "hr@5"
  double unlearned = 0.0;
  double retrained = 0.0;
  double gap = 0.0;  // unlearned - retrained
};

struct GapReport {
  std::vector<GapRow> rows;
  double param_distance = 0.0;  // ||theta_unlearned - theta_retrained||
  double stationarity_unlearned = 0.0;  // ||mean grad over remain|| at each model
  double stationarity_retrained = 0.0;
};

GapReport gap_report(const ModelState& unlearned, const ModelState& retrained,
                     const SampleSet& remain, const SampleSet& test,
                     const PopularityTable& pop, const GroupAssignment& groups,
                     const EvalConfig& cfg, std::size_t threads = 1);

// Uniform random unlearn set of the given size, for baselines.
std::vector<std::size_t> random_unlearn_baseline(std::size_t train_size, std::size_t size,
                                                 std::uint64_t seed);

SampleSet remove_samples(const SampleSet& train, const std::vector<std::size_t>& unlearn_ids);

}  // namespace debrec
