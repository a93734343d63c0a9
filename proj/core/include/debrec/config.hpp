#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "debrec/dataset.hpp"
#include "debrec/fairness.hpp"
#include "debrec/influence.hpp"
#include "debrec/mask.hpp"
#include "debrec/model.hpp"

namespace debrec {

// Full experiment configuration. Serialized as sorted `key = value` lines;
// config.resolved echoes every effective key and reruns the experiment.
// Execution knobs (--threads) are deliberately not part of this record.
struct RunConfig {
  // data.*
  std::string interactions;
  std::string attributes;  // optional
  SplitConfig split;
  PopularityConfig popularity;

  // model.* / train.*
  TrainConfig train;

  // bias.*
  BiasSpec bias;
  std::size_t bias_eval_cap = 0;  // 0 = full validation split
  std::uint64_t bias_eval_seed = 17;

  // mask.*
  MaskOptConfig mask;
  double candidate_ratio = 0.1;
  std::uint64_t candidate_seed = 7;

  // cg.*
  CGConfig cg;

  // eval.*
  EvalConfig eval;

  // grid.*
  std::vector<double> grid_values = {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0};

  // cost.*: pinned bound constant; 0 fits it from the measured run.
  double cost_c = 0.0;

  // output.*
  std::string output_dir = "out";
};

// Defaults overlaid with the file's keys. Unknown keys and malformed lines
// are errors carrying the line number. '#' starts a comment.
RunConfig parse_config_file(const std::string& path);

// Applies one `key=value` override (same keys as the file).
void apply_override(RunConfig& cfg, const std::string& assignment);

// Sorted key-value rendering; parse(serialize(cfg)) == cfg.
std::string serialize_config(const RunConfig& cfg);

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<text>");

// Throws on out-of-range values (ratios, periods, alpha, tolerances).
void validate_config(const RunConfig& cfg);

}  // namespace debrec
