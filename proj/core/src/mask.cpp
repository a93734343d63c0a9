#include "debrec/mask.hpp"

#include <cmath>
#include <iostream>

namespace debrec {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

MaskObjective mask_objective(const InfluenceCache& cache, const Vec& logits,
                             const MaskOptConfig& cfg) {
  const std::size_t n = cache.entries.size();
  if (n == 0) throw std::invalid_argument("mask_objective: empty influence cache");
  if (logits.size() != static_cast<Eigen::Index>(n)) {
    throw AlignmentError("mask_objective: logits do not align with the influence cache");
  }

  MaskObjective out;
  out.grad.resize(logits.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    const InfluenceEntry& e = cache.entries[k];
    const double m = sigmoid(logits[static_cast<Eigen::Index>(k)]);
    out.fair_term += -m * e.influence;
    out.acc_term += m * e.loss;
    out.sparsity_term += m;
    // d value / d logit = sigmoid'(w) * (-lf*I + la*loss + ls) / n
    const double dm = m * (1.0 - m);
    out.grad[static_cast<Eigen::Index>(k)] =
        dm * (-cfg.lambda_fair * e.influence + cfg.lambda_acc * e.loss + cfg.lambda_spa) * inv_n;
  }
  out.fair_term *= inv_n;
  out.acc_term *= inv_n;
  out.sparsity_term *= inv_n;
  out.value = cfg.lambda_fair * out.fair_term + cfg.lambda_acc * out.acc_term +
              cfg.lambda_spa * out.sparsity_term;
  return out;
}

MaskState optimize_mask(const InfluenceCache& cache, const MaskOptConfig& cfg) {
  const std::size_t n = cache.entries.size();
  if (n == 0) throw std::invalid_argument("optimize_mask: empty influence cache");
  if (!(cfg.lr >= 0.0)) throw std::invalid_argument("optimize_mask: negative learning rate");

  MaskState state;
  state.sample_ids.reserve(n);
  for (const auto& e : cache.entries) state.sample_ids.push_back(e.sample_id);
  state.logits = Vec::Constant(static_cast<Eigen::Index>(n), cfg.init_logit);

  const double initial = mask_objective(cache, state.logits, cfg).value;
  Vec m1 = Vec::Zero(state.logits.size());
  Vec m2 = Vec::Zero(state.logits.size());
  for (std::size_t t = 1; t <= cfg.iterations; ++t) {
    const MaskObjective obj = mask_objective(cache, state.logits, cfg);
    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * obj.grad;
    m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * obj.grad.cwiseProduct(obj.grad);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const Vec mhat = m1 / c1;
    const Vec vhat = m2 / c2;
    state.logits -=
        cfg.lr * (mhat.array() / (vhat.array().sqrt() + cfg.eps)).matrix();
  }
  const double final_value = mask_objective(cache, state.logits, cfg).value;
  if (final_value > initial) {
    std::cerr << "[debrec] warning: mask objective rose from " << initial << " to "
              << final_value << " over " << cfg.iterations << " iterations\n";
  }
  return state;
}

std::vector<std::size_t> select_unlearn_set(const MaskState& mask) {
  if (mask.logits.size() != static_cast<Eigen::Index>(mask.sample_ids.size())) {
    throw AlignmentError("select_unlearn_set: logits do not align with sample ids");
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < mask.sample_ids.size(); ++k) {
    if (mask.logits[static_cast<Eigen::Index>(k)] > 0.0) out.push_back(mask.sample_ids[k]);
  }
  return out;
}

}  // namespace debrec
