#pragma once

#include <cstdint>
#include <vector>

#include "debrec/common.hpp"
#include "debrec/influence.hpp"

namespace debrec {

struct MaskOptConfig {
  double lambda_fair = 1.0;
  double lambda_acc = 1.0;
  double lambda_spa = 1.0;
  double lr = 1e-3;
  std::size_t iterations = 500;
  double init_logit = 0.0;
  // Adam moment decays and epsilon; bias-corrected updates.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-candidate selection logits; m_k = sigmoid(logit_k).
struct MaskState {
  std::vector<std::size_t> sample_ids;  // aligned with the candidate set
  Vec logits;
};

struct MaskObjective {
  double value = 0.0;
  Vec grad;  // w.r.t. logits
  double fair_term = 0.0;      // -mean(m_k * influence_k)
  double acc_term = 0.0;       // mean(m_k * loss_k)
  double sparsity_term = 0.0;  // mean(m_k)
};

// L = lambda_fair * fair + lambda_acc * acc + lambda_spa * sparsity over the
// cached influence entries; logits must align with the cache.
MaskObjective mask_objective(const InfluenceCache& cache, const Vec& logits,
                             const MaskOptConfig& cfg);

// Adam on the logits from init_logit. Deterministic; cached influences and
// losses are constants, so no gradient evaluations are spent here. Warns on
// stderr if the final objective exceeds the initial one.
MaskState optimize_mask(const InfluenceCache& cache, const MaskOptConfig& cfg);

// Sample ids with strictly positive final logit, ascending.
std::vector<std::size_t> select_unlearn_set(const MaskState& mask);

}  // namespace debrec
