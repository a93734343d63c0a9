#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "debrec/common.hpp"
#include "debrec/cost.hpp"
#include "debrec/dataset.hpp"
#include "debrec/fairness.hpp"
#include "debrec/model.hpp"

namespace debrec {

struct CGConfig {
  double damping = 1e-3;  // lambda added to the operator's diagonal
  double tol = 1e-8;      // relative residual target
  std::size_t max_iter = 200;
};

struct CGResult {
  Vec x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

using LinearOp = std::function<Vec(const Vec&)>;

// Conjugate gradient on (A + damping*I) x = b from x0 = 0. b = 0 returns
// x = 0 after zero iterations. Hitting max_iter reports converged = false;
// a non-finite intermediate aborts with the iteration index.
CGResult solve_damped_cg(const LinearOp& apply_a, const Vec& b, const CGConfig& cfg,
                         CostCounters* cost = nullptr);

// Influence state shared by every candidate: s = (H + damping*I)^{-1} grad B,
// H the mean-loss Hessian over the full training set at the current model.
struct InfluenceVector {
  Vec s;
  CGResult cg;
};

InfluenceVector precompute_influence_vector(const ModelState& model, const SampleSet& train,
                                            const BiasValue& bias, const CGConfig& cfg,
                                            std::size_t threads = 1, CostCounters* cost = nullptr);

struct InfluenceEntry {
  std::size_t sample_id = 0;  // index into the training set
  double influence = 0.0;     // -<s, grad loss_k>; positive means removal lowers bias
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct InfluenceCache {
  std::vector<InfluenceEntry> entries;  // ascending sample_id
  std::string fingerprint;              // hash of (model, bias spec, cg config)
};

std::string influence_fingerprint(const ModelState& model, const BiasSpec& spec,
                                  const CGConfig& cfg);

// Scores every candidate against a precomputed influence vector. Entries are
// ordered by sample id; per-candidate loss and gradient norm are cached for
// the mask objective.
InfluenceCache influence_scores(const ModelState& model, const SampleSet& train,
                                const CandidateSet& candidates, const InfluenceVector& iv,
                                const BiasSpec& spec, const CGConfig& cfg,
                                std::size_t threads = 1, CostCounters* cost = nullptr);

}  // namespace debrec
