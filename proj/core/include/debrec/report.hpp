#pragma once

#include <string>
#include <utility>
#include <vector>

#include "debrec/config.hpp"
#include "debrec/cost.hpp"
#include "debrec/fairness.hpp"
#include "debrec/influence.hpp"
#include "debrec/mask.hpp"
#include "debrec/unlearn.hpp"

namespace debrec {

// All report files are deterministic: fixed column orders, '\n' newlines,
// shortest round-trip number formatting, no timestamps.

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// stage,K,hr,ndcg,arp,apt,hd,dp,f_pop,f_attr
void write_metrics_csv(const std::vector<std::pair<std::string, EvalReport>>& stages,
                       const std::string& path);

// `# fingerprint=<hex>` then sample_id,influence,loss,grad_norm
void write_influence_csv(const InfluenceCache& cache, const std::string& path);
InfluenceCache read_influence_csv(const std::string& path);

// sample_id,final_logit,m,influence,loss,selected
void write_mask_csv(const MaskState& mask, const InfluenceCache& cache,
                    const std::vector<std::size_t>& selected, const std::string& path);
std::vector<std::size_t> read_mask_selected(const std::string& path);

void write_unlearn_json(const UnlearnResult& result, const std::string& path);

// metric,unlearned_value,retrained_value,gap plus param/stationarity footer rows
void write_gap_csv(const GapReport& report, const std::string& path);

struct DecileRow {
  std::size_t decile = 0;  // 0 = most popular tenth
  std::size_t items = 0;
  double item_share = 0.0;
  double rec_share = 0.0;     // fraction of top-K slots landing in this decile
  double target_share = 0.0;  // fraction of test targets in this decile
};

// Buckets items into ten popularity deciles (count descending, ties by item
// id) and measures where the model's top-K slots and the true targets fall.
// rec_share and target_share each sum to 1 over the deciles.
std::vector<DecileRow> decile_report(const ModelState& model, const SampleSet& test,
                                     const PopularityTable& pop, std::size_t k,
                                     bool exclude_history = false, std::size_t threads = 1);

// stage,decile,items,item_share,rec_share,target_share
void write_decile_csv(const std::vector<std::pair<std::string, std::vector<DecileRow>>>& stages,
                      const std::string& path);

struct CostReport {
  CostCounters train, identify, unlearn;
  std::size_t n = 0;
  std::size_t n_candidates = 0;
  std::size_t n_unlearn = 0;
  std::size_t epochs = 0;
  double c = 0.0;  // bound constant, fitted when the config pins none
  bool c_fitted = false;
  double identify_bound = 0.0;  // c * (n_candidates + identify cg iterations)
  double unlearn_bound = 0.0;   // c * (n_unlearn + unlearn cg iterations)
  bool identify_violation = false;  // measured > 1.1 * bound
  bool unlearn_violation = false;
};

// Builds the report and flags stages whose measured gradient evaluations
// exceed their bound by more than 10%.
CostReport cost_report(const CostCounters& train, const CostCounters& identify,
                       const CostCounters& unlearn, std::size_t n, std::size_t n_candidates,
                       std::size_t n_unlearn, std::size_t epochs, double pinned_c);

void write_cost_json(const CostReport& report, const std::string& path);

void write_config_resolved(const RunConfig& cfg, const std::string& path);

// Marker dropped into the output directory when a stage aborts.
void write_failed_marker(const std::string& out_dir, const std::string& stage,
                         const std::string& message);

}  // namespace debrec
