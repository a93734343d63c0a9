#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "debrec/common.hpp"
#include "debrec/cost.hpp"
#include "debrec/dataset.hpp"
#include "debrec/model.hpp"

namespace debrec {

enum class BiasKind { popularity, attribute, combined };

struct BiasSpec {
  BiasKind kind = BiasKind::popularity;
  double alpha = 0.5;  // combined = alpha * popularity + (1 - alpha) * attribute
};

struct BiasValue {
  double value = 0.0;
  ParamVector grad;  // exact analytic gradient of value
};

// Differentiable bias functionals over an evaluation set.
//   popularity: mean over samples of sum_i P(i|z) * v_pop(i)
//   attribute:  |mean_{group 0} P(target|z) - mean_{group 1} P(target|z)|,
//               subgradient sign(0) = 0 at the kink
// attribute and combined require both groups present in the eval set.
BiasValue evaluate_bias(const ModelState& model, const SampleSet& eval_set,
                        const PopularityTable& pop, const GroupAssignment& groups,
                        const BiasSpec& spec, std::size_t threads = 1,
                        CostCounters* cost = nullptr);

// Which pair of fairness components feeds the combined f-scores.
//   table: popularity pairs with APT@K, attribute with 1-DP@K
//   text:  popularity pairs with ARP@K, attribute with 1-HD@K
enum class FScoreVariant { table, text };

// Harmonic combination 2*(tau*hr*fair)/(tau*hr + fair); 0 on a zero
// denominator. Negative inputs are rejected.
double f_score(double hr, double fair, double tau);

struct MetricRow {
  std::size_t k = 0;
  double hr = 0.0;
  double ndcg = 0.0;
  double arp = 0.0;
  double apt = 0.0;
  double hd = 0.0;      // NaN without group data
  double dp = 0.0;      // NaN without group data
  double f_pop = 0.0;
  double f_attr = 0.0;  // NaN without group data
};

struct EvalReport {
  std::vector<MetricRow> rows;  // one per requested K, input order
  double tau = 5.0;
};

struct EvalConfig {
  std::vector<std::size_t> ks = {5, 20};
  double tau = 5.0;
  FScoreVariant fscore = FScoreVariant::table;
  bool exclude_history = false;
};

// Ranked-list metrics over a test set.
//   HR@K    hit rate of the target in the top-K
//   NDCG@K  mean 1/log2(1+rank) over hits, rank 1-based
//   ARP@K   mean over samples of mean v_pop over the top-K
//   APT@K   mean over samples of |top-K restricted to tail| / K
//   HD@K    |HR@K(group 0) - HR@K(group 1)|
//   DP@K    total-variation distance between the groups' per-item
//           recommendation frequencies f_g(i) = count_g(i) / (K * |group g|)
EvalReport evaluate_model(const ModelState& model, const SampleSet& test,
                          const PopularityTable& pop, const GroupAssignment& groups,
                          const EvalConfig& cfg, std::size_t threads = 1);

}  // namespace debrec
