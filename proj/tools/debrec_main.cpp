// debrec: two-phase debias-by-unlearning pipeline driver.
//
// Subcommands mirror the pipeline stages; run-all executes everything in one
// process. All artifacts land in the output directory; stdout stays quiet so
// reports are the only record of a run, timings go to stderr.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "debrec/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string interactions;
  std::string attributes;
  std::size_t threads = 1;
};

void add_common_options(CLI::App* cmd, CliOptions& opts) {
  cmd->add_option("--config", opts.config_path, "Config file of key = value lines");
  cmd->add_option("--set", opts.overrides, "Override one config key (key=value), repeatable");
  cmd->add_option("--out", opts.out_dir, "Output directory (overrides output.dir)");
  cmd->add_option("--interactions", opts.interactions, "Interaction log (overrides data.interactions)");
  cmd->add_option("--attributes", opts.attributes, "User attribute file (overrides data.attributes)");
  cmd->add_option("--threads", opts.threads, "Worker threads; 0 = hardware concurrency")
      ->capture_default_str();
}

// defaults < config file < DEBREC_OUTPUT_DIR < --set < --interactions/
// --attributes/--out. --threads never enters the config record.
debrec::RunConfig resolve_config(const CliOptions& opts) {
  debrec::RunConfig cfg;
  if (!opts.config_path.empty()) cfg = debrec::parse_config_file(opts.config_path);
  if (const char* env = std::getenv("DEBREC_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  for (const auto& assignment : opts.overrides) debrec::apply_override(cfg, assignment);
  if (!opts.interactions.empty()) cfg.interactions = opts.interactions;
  if (!opts.attributes.empty()) cfg.attributes = opts.attributes;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  return cfg;
}

class StageTimer {
 public:
  explicit StageTimer(const char* label)
      : label_(label), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const auto elapsed = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - start_);
    std::fprintf(stderr, "debrec: %s finished in %.2fs\n", label_, elapsed.count());
  }

 private:
  const char* label_;
  std::chrono::steady_clock::time_point start_;
};

int dispatch(const char* label, const CliOptions& opts,
             void (*body)(const debrec::RunConfig&, std::size_t)) {
  debrec::RunConfig cfg;
  try {
    cfg = resolve_config(opts);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "debrec: config error: %s\n", e.what());
    return 2;
  }
  try {
    StageTimer timer(label);
    body(cfg, opts.threads);
    return 0;
  } catch (const debrec::StageError& e) {
    std::fprintf(stderr, "debrec: %s\n", e.what());
    return debrec::stage_exit_code(e.stage);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "debrec: config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "debrec: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debias a next-item recommender by influence-guided unlearning"};
  app.require_subcommand(1);

  CliOptions train_opts, identify_opts, unlearn_opts, evaluate_opts, gap_opts, runall_opts,
      grid_opts;

  CLI::App* cmd_train = app.add_subcommand("train", "Train the backbone and write model.bin");
  add_common_options(cmd_train, train_opts);

  CLI::App* cmd_identify = app.add_subcommand(
      "identify", "Score influence on the trained backbone and optimize the selection mask");
  add_common_options(cmd_identify, identify_opts);

  CLI::App* cmd_unlearn = app.add_subcommand(
      "unlearn", "Apply the one-step update for the mask-selected samples");
  add_common_options(cmd_unlearn, unlearn_opts);

  CLI::App* cmd_evaluate =
      app.add_subcommand("evaluate", "Write test-split metrics for the stored checkpoints");
  add_common_options(cmd_evaluate, evaluate_opts);

  CLI::App* cmd_gap = app.add_subcommand(
      "gap-check", "Retrain without the selected samples and report the gap to the update");
  add_common_options(cmd_gap, gap_opts);

  CLI::App* cmd_runall = app.add_subcommand("run-all", "Run the full pipeline in one process");
  add_common_options(cmd_runall, runall_opts);
  std::string through = "report";
  bool with_gap = false;
  cmd_runall->add_option("--stage", through, "Stop after this stage")->capture_default_str();
  cmd_runall->add_flag("--with-gap", with_gap, "Also retrain the oracle and write gap.csv");

  CLI::App* cmd_grid = app.add_subcommand(
      "grid", "Sweep the lambda grid on the validation split and write grid.csv");
  add_common_options(cmd_grid, grid_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (cmd_train->parsed()) return dispatch("train", train_opts, debrec::run_train);
  if (cmd_identify->parsed()) return dispatch("identify", identify_opts, debrec::run_identify);
  if (cmd_unlearn->parsed()) return dispatch("unlearn", unlearn_opts, debrec::run_unlearn);
  if (cmd_evaluate->parsed()) return dispatch("evaluate", evaluate_opts, debrec::run_evaluate);
  if (cmd_gap->parsed()) return dispatch("gap-check", gap_opts, debrec::run_gap_check);

  if (cmd_runall->parsed()) {
    debrec::RunConfig cfg;
    debrec::PipelineOptions options;
    try {
      cfg = resolve_config(runall_opts);
      options.through = debrec::stage_from_name(through);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "debrec: config error: %s\n", e.what());
      return 2;
    }
    options.with_gap = with_gap;
    options.threads = runall_opts.threads;
    try {
      StageTimer timer("run-all");
      debrec::run_pipeline(cfg, options);
      return 0;
    } catch (const debrec::StageError& e) {
      std::fprintf(stderr, "debrec: %s\n", e.what());
      return debrec::stage_exit_code(e.stage);
    } catch (const std::invalid_argument& e) {
      std::fprintf(stderr, "debrec: config error: %s\n", e.what());
      return 2;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "debrec: %s\n", e.what());
      return 1;
    }
  }

  if (cmd_grid->parsed()) {
    debrec::RunConfig cfg;
    try {
      cfg = resolve_config(grid_opts);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "debrec: config error: %s\n", e.what());
      return 2;
    }
    debrec::PipelineOptions options;
    options.threads = grid_opts.threads;
    try {
      StageTimer timer("grid");
      const debrec::GridResult grid = debrec::grid_search(cfg, options);
      debrec::write_grid_csv(grid,
                             (std::filesystem::path(cfg.output_dir) / "grid.csv").string());
      const debrec::GridRow& best = grid.rows.at(grid.best);
      std::fprintf(stderr,
                   "debrec: best lambda_fair=%g lambda_acc=%g lambda_spa=%g fscore=%g\n",
                   best.lambda_fair, best.lambda_acc, best.lambda_spa, best.fscore);
      return 0;
    } catch (const debrec::StageError& e) {
      std::fprintf(stderr, "debrec: %s\n", e.what());
      return debrec::stage_exit_code(e.stage);
    } catch (const std::invalid_argument& e) {
      std::fprintf(stderr, "debrec: config error: %s\n", e.what());
      return 2;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "debrec: %s\n", e.what());
      return 1;
    }
  }
  return 2;
}
