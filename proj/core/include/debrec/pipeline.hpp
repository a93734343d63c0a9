#pragma once

#include <optional>
#include <string>
#include <vector>

#include "debrec/config.hpp"
#include "debrec/report.hpp"

namespace debrec {

enum class Stage {
  load,
  split,
  train,
  bias,
  influence,
  mask,
  unlearn,
  evaluate,
  gap,
  report,
};

const char* stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

// Nonzero process exit code identifying the failed stage.
int stage_exit_code(Stage stage);

// A stage failure wrapping the original error; the CLI maps it to the
// stage's exit code after dropping the FAILED marker.
struct StageError : Error {
  StageError(Stage s, const std::string& msg)
      : Error(std::string(stage_name(s)) + ": " + msg), stage(s) {}
  Stage stage;
};

struct PipelineOptions {
  Stage through = Stage::report;  // run stages up to and including this one
  bool with_gap = false;          // also retrain the oracle and write gap.csv
  std::size_t threads = 1;        // 0 = hardware concurrency
  bool reuse_checkpoint = true;   // load model.bin instead of training when present
};

struct PipelineResult {
  std::optional<ModelState> model;
  std::optional<ModelState> debiased;
  std::optional<ModelState> retrained;
  BiasValue bias;
  InfluenceCache influence;
  MaskState mask;
  std::vector<std::size_t> unlearn_ids;
  UnlearnResult unlearn;
  std::optional<EvalReport> metrics_backbone;
  std::optional<EvalReport> metrics_debiased;
  std::optional<GapReport> gap;
  CostReport cost;
};

// Full two-phase run: load -> split -> train/load -> bias -> influence ->
// mask -> unlearn -> evaluate (backbone and debiased) -> reports, stopping
// after options.through. Every produced artifact is flushed before the next
// stage starts; on error a FAILED marker lands next to the partial outputs
// and the failure is rethrown as a StageError.
PipelineResult run_pipeline(const RunConfig& cfg, const PipelineOptions& options);

// Single-stage entry points backing the CLI subcommands. Each loads its
// prerequisites from the output directory and writes only its own artifacts.
void run_train(const RunConfig& cfg, std::size_t threads);
void run_identify(const RunConfig& cfg, std::size_t threads);
void run_unlearn(const RunConfig& cfg, std::size_t threads);
void run_evaluate(const RunConfig& cfg, std::size_t threads);
void run_gap_check(const RunConfig& cfg, std::size_t threads);

struct GridRow {
  double lambda_fair = 0.0;
  double lambda_acc = 0.0;
  double lambda_spa = 0.0;
  std::size_t unlearn_size = 0;
  double hr = 0.0;    // validation metrics at the first configured K
  double apt = 0.0;
  double fair = 0.0;  // fairness component per the configured f-score variant
  double fscore = 0.0;
};

struct GridResult {
  std::vector<GridRow> rows;  // grid order: lambda_fair, then acc, then spa
  std::size_t best = 0;       // argmax validation f-score, ties to earlier rows
};

// Sweeps the lambda grid, scoring each combination on the validation split.
// Influence scores are computed once; combinations selecting the same
// unlearn set share one solve and one evaluation.
GridResult grid_search(const RunConfig& cfg, const PipelineOptions& options);

void write_grid_csv(const GridResult& grid, const std::string& path);

}  // namespace debrec
