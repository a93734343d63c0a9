#include "debrec/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <map>

namespace debrec {

namespace fs = std::filesystem;

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::load: return "load";
    case Stage::split: return "split";
    case Stage::train: return "train";
    case Stage::bias: return "bias";
    case Stage::influence: return "influence";
    case Stage::mask: return "mask";
    case Stage::unlearn: return "unlearn";
    case Stage::evaluate: return "evaluate";
    case Stage::gap: return "gap";
    case Stage::report: return "report";
  }
  return "unknown";
}

Stage stage_from_name(const std::string& name) {
  for (const Stage s : {Stage::load, Stage::split, Stage::train, Stage::bias, Stage::influence,
                        Stage::mask, Stage::unlearn, Stage::evaluate, Stage::gap, Stage::report}) {
    if (name == stage_name(s)) return s;
  }
  throw std::invalid_argument("unknown stage: " + name);
}

int stage_exit_code(Stage stage) { return 10 + static_cast<int>(stage); }

namespace {

bool at_least(Stage through, Stage s) {
  return static_cast<int>(through) >= static_cast<int>(s);
}

struct DataBundle {
  InteractionLog log;
  GroupAssignment groups;
  SplitDataset split;
  PopularityTable pop;
};

// Stages load + split; the caller tags failures with the right stage.
InteractionLog load_log(const RunConfig& cfg, GroupAssignment* groups) {
  if (cfg.interactions.empty()) throw std::invalid_argument("data.interactions is not set");
  InteractionLog log = load_interactions(cfg.interactions);
  *groups = cfg.attributes.empty() ? empty_groups(log) : load_groups(cfg.attributes, log);
  return log;
}

void split_data(const RunConfig& cfg, DataBundle& data) {
  data.split = temporal_split(data.log, cfg.split);
  data.pop = compute_popularity(data.split.train, data.log.item_count(), cfg.popularity);
}

SampleSet bias_eval_subset(const SampleSet& valid, const RunConfig& cfg) {
  if (cfg.bias_eval_cap == 0 || cfg.bias_eval_cap >= valid.size()) return valid;
  Rng rng(cfg.bias_eval_seed);
  const auto idx = rng.sample_without_replacement(valid.size(), cfg.bias_eval_cap);
  SampleSet subset;
  subset.reserve(idx.size());
  for (const auto i : idx) subset.push_back(valid[i]);
  return subset;
}

fs::path out_path(const RunConfig& cfg, const char* name) {
  return fs::path(cfg.output_dir) / name;
}

void prepare_output_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  std::error_code ec;
  fs::remove(out_path(cfg, "FAILED"), ec);
}

ModelState require_checkpoint(const RunConfig& cfg) {
  const fs::path path = out_path(cfg, "model.bin");
  if (!fs::exists(path)) {
    throw StageError(Stage::train,
                     "missing " + path.string() + "; run the train stage into this output "
                     "directory first");
  }
  return load_checkpoint(path.string());
}

// Wraps a stage body: on failure drops the FAILED marker and rethrows as a
// StageError carrying the stage.
template <typename Fn>
auto run_stage(const RunConfig& cfg, Stage stage, Fn&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError& e) {
    write_failed_marker(cfg.output_dir, stage_name(e.stage), e.what());
    throw;
  } catch (const std::exception& e) {
    write_failed_marker(cfg.output_dir, stage_name(stage), e.what());
    throw StageError(stage, e.what());
  }
}

struct UnlearnArtifacts {
  UnlearnResult result;
  ModelState debiased;
};

// An empty selection must reproduce the backbone checkpoint bit for bit, so
// the update is skipped rather than applied with a zero delta (adding 0.0
// would still flip the sign bit of a -0.0 weight).
UnlearnArtifacts unlearn_step(const ModelState& model, const SampleSet& train,
                              const std::vector<std::size_t>& selected, const CGConfig& cg,
                              std::size_t threads, CostCounters* cost) {
  UnlearnArtifacts a;
  a.result = compute_delta(model, train, selected, cg, threads, cost);
  a.debiased = selected.empty() ? model : apply_update(model, a.result.delta);
  return a;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, const PipelineOptions& options) {
  validate_config(cfg);
  const std::size_t threads = resolve_threads(options.threads);
  prepare_output_dir(cfg);
  write_config_resolved(cfg, out_path(cfg, "config.resolved").string());

  PipelineResult result;
  DataBundle data;

  run_stage(cfg, Stage::load, [&] {
    data.log = load_log(cfg, &data.groups);
    write_index_map(data.log, out_path(cfg, "index_map.json").string());
  });
  if (!at_least(options.through, Stage::split)) return result;

  run_stage(cfg, Stage::split, [&] { split_data(cfg, data); });
  if (!at_least(options.through, Stage::train)) return result;

  CostCounters train_cost;
  TrainStats train_stats;
  run_stage(cfg, Stage::train, [&] {
    const fs::path ckpt = out_path(cfg, "model.bin");
    if (options.reuse_checkpoint && fs::exists(ckpt)) {
      result.model = load_checkpoint(ckpt.string());
    } else {
      result.model = train_backbone(data.split.train, data.log.item_count(), cfg.train, threads,
                                    &train_cost, &train_stats);
      save_checkpoint(*result.model, ckpt.string());
    }
  });
  if (!at_least(options.through, Stage::bias)) return result;

  CostCounters identify_cost;
  run_stage(cfg, Stage::bias, [&] {
    const SampleSet eval_set = bias_eval_subset(data.split.valid, cfg);
    result.bias = evaluate_bias(*result.model, eval_set, data.pop, data.groups, cfg.bias, threads,
                                &identify_cost);
  });
  if (!at_least(options.through, Stage::influence)) return result;

  CandidateSet candidates;
  run_stage(cfg, Stage::influence, [&] {
    candidates =
        sample_candidates(data.split.train.size(), cfg.candidate_ratio, cfg.candidate_seed);
    const InfluenceVector iv = precompute_influence_vector(*result.model, data.split.train,
                                                           result.bias, cfg.cg, threads,
                                                           &identify_cost);
    result.influence = influence_scores(*result.model, data.split.train, candidates, iv, cfg.bias,
                                        cfg.cg, threads, &identify_cost);
    write_influence_csv(result.influence, out_path(cfg, "influence.csv").string());
  });
  if (!at_least(options.through, Stage::mask)) return result;

  run_stage(cfg, Stage::mask, [&] {
    result.mask = optimize_mask(result.influence, cfg.mask);
    result.unlearn_ids = select_unlearn_set(result.mask);
    write_mask_csv(result.mask, result.influence, result.unlearn_ids,
                   out_path(cfg, "mask.csv").string());
  });
  if (!at_least(options.through, Stage::unlearn)) return result;

  CostCounters unlearn_cost;
  run_stage(cfg, Stage::unlearn, [&] {
    auto a = unlearn_step(*result.model, data.split.train, result.unlearn_ids, cfg.cg, threads,
                          &unlearn_cost);
    result.unlearn = std::move(a.result);
    result.debiased = std::move(a.debiased);
    save_checkpoint(*result.debiased, out_path(cfg, "model_debiased.bin").string());
    write_unlearn_json(result.unlearn, out_path(cfg, "unlearn.json").string());
  });
  if (!at_least(options.through, Stage::evaluate)) return result;

  run_stage(cfg, Stage::evaluate, [&] {
    result.metrics_backbone =
        evaluate_model(*result.model, data.split.test, data.pop, data.groups, cfg.eval, threads);
    result.metrics_debiased =
        evaluate_model(*result.debiased, data.split.test, data.pop, data.groups, cfg.eval,
                       threads);
    write_metrics_csv({{"backbone", *result.metrics_backbone},
                       {"debiased", *result.metrics_debiased}},
                      out_path(cfg, "metrics.csv").string());
    const std::size_t k = cfg.eval.ks.front();
    const auto deciles_backbone = decile_report(*result.model, data.split.test, data.pop, k,
                                                cfg.eval.exclude_history, threads);
    const auto deciles_debiased = decile_report(*result.debiased, data.split.test, data.pop, k,
                                                cfg.eval.exclude_history, threads);
    write_decile_csv({{"backbone", deciles_backbone}, {"debiased", deciles_debiased}},
                     out_path(cfg, "decile_report.csv").string());
  });

  if (options.with_gap && at_least(options.through, Stage::gap)) {
    run_stage(cfg, Stage::gap, [&] {
      result.retrained = retrain_oracle(data.split.train, data.log.item_count(),
                                        result.unlearn_ids, cfg.train, threads);
      save_checkpoint(*result.retrained, out_path(cfg, "model_retrained.bin").string());
      const SampleSet remain = remove_samples(data.split.train, result.unlearn_ids);
      result.gap = gap_report(*result.debiased, *result.retrained, remain, data.split.test,
                              data.pop, data.groups, cfg.eval, threads);
      write_gap_csv(*result.gap, out_path(cfg, "gap.csv").string());
    });
  }
  if (!at_least(options.through, Stage::report)) return result;

  run_stage(cfg, Stage::report, [&] {
    result.cost = cost_report(train_cost, identify_cost, unlearn_cost, data.split.train.size(),
                              candidates.ids.size(), result.unlearn_ids.size(),
                              train_stats.epochs_run, cfg.cost_c);
    write_cost_json(result.cost, out_path(cfg, "cost.json").string());
  });
  return result;
}

void run_train(const RunConfig& cfg, std::size_t threads) {
  validate_config(cfg);
  const std::size_t t = resolve_threads(threads);
  prepare_output_dir(cfg);
  write_config_resolved(cfg, out_path(cfg, "config.resolved").string());

  DataBundle data;
  run_stage(cfg, Stage::load, [&] {
    data.log = load_log(cfg, &data.groups);
    write_index_map(data.log, out_path(cfg, "index_map.json").string());
  });
  run_stage(cfg, Stage::split, [&] { split_data(cfg, data); });
  run_stage(cfg, Stage::train, [&] {
    const ModelState model =
        train_backbone(data.split.train, data.log.item_count(), cfg.train, t);
    save_checkpoint(model, out_path(cfg, "model.bin").string());
  });
}

void run_identify(const RunConfig& cfg, std::size_t threads) {
  validate_config(cfg);
  const std::size_t t = resolve_threads(threads);
  prepare_output_dir(cfg);

  DataBundle data;
  run_stage(cfg, Stage::load, [&] { data.log = load_log(cfg, &data.groups); });
  run_stage(cfg, Stage::split, [&] { split_data(cfg, data); });
  const ModelState model = run_stage(cfg, Stage::train, [&] { return require_checkpoint(cfg); });

  BiasValue bias;
  run_stage(cfg, Stage::bias, [&] {
    bias = evaluate_bias(model, bias_eval_subset(data.split.valid, cfg), data.pop, data.groups,
                         cfg.bias, t);
  });
  InfluenceCache cache;
  run_stage(cfg, Stage::influence, [&] {
    const CandidateSet candidates =
        sample_candidates(data.split.train.size(), cfg.candidate_ratio, cfg.candidate_seed);
    const InfluenceVector iv =
        precompute_influence_vector(model, data.split.train, bias, cfg.cg, t);
    cache = influence_scores(model, data.split.train, candidates, iv, cfg.bias, cfg.cg, t);
    write_influence_csv(cache, out_path(cfg, "influence.csv").string());
  });
  run_stage(cfg, Stage::mask, [&] {
    const MaskState mask = optimize_mask(cache, cfg.mask);
    write_mask_csv(mask, cache, select_unlearn_set(mask), out_path(cfg, "mask.csv").string());
  });
}

void run_unlearn(const RunConfig& cfg, std::size_t threads) {
  validate_config(cfg);
  const std::size_t t = resolve_threads(threads);
  prepare_output_dir(cfg);

  DataBundle data;
  run_stage(cfg, Stage::load, [&] { data.log = load_log(cfg, &data.groups); });
  run_stage(cfg, Stage::split, [&] { split_data(cfg, data); });
  const ModelState model = run_stage(cfg, Stage::train, [&] { return require_checkpoint(cfg); });

  run_stage(cfg, Stage::unlearn, [&] {
    const fs::path mask_path = out_path(cfg, "mask.csv");
    if (!fs::exists(mask_path)) {
      throw Error("missing " + mask_path.string() + "; run the identify stage first");
    }
    const std::vector<std::size_t> selected = read_mask_selected(mask_path.string());
    const auto a = unlearn_step(model, data.split.train, selected, cfg.cg, t, nullptr);
    save_checkpoint(a.debiased, out_path(cfg, "model_debiased.bin").string());
    write_unlearn_json(a.result, out_path(cfg, "unlearn.json").string());
  });
}

void run_evaluate(const RunConfig& cfg, std::size_t threads) {
  validate_config(cfg);
  const std::size_t t = resolve_threads(threads);
  prepare_output_dir(cfg);

  DataBundle data;
  run_stage(cfg, Stage::load, [&] { data.log = load_log(cfg, &data.groups); });
  run_stage(cfg, Stage::split, [&] { split_data(cfg, data); });
  const ModelState model = run_stage(cfg, Stage::train, [&] { return require_checkpoint(cfg); });

  run_stage(cfg, Stage::evaluate, [&] {
    std::vector<std::pair<std::string, EvalReport>> stages;
    stages.emplace_back("backbone",
                        evaluate_model(model, data.split.test, data.pop, data.groups, cfg.eval, t));
    const fs::path debiased_path = out_path(cfg, "model_debiased.bin");
    std::optional<ModelState> debiased;
    if (fs::exists(debiased_path)) {
      debiased = load_checkpoint(debiased_path.string());
      stages.emplace_back("debiased", evaluate_model(*debiased, data.split.test, data.pop,
                                                     data.groups, cfg.eval, t));
    }
    write_metrics_csv(stages, out_path(cfg, "metrics.csv").string());

    const std::size_t k = cfg.eval.ks.front();
    std::vector<std::pair<std::string, std::vector<DecileRow>>> deciles;
    deciles.emplace_back("backbone", decile_report(model, data.split.test, data.pop, k,
                                                   cfg.eval.exclude_history, t));
    if (debiased) {
      deciles.emplace_back("debiased", decile_report(*debiased, data.split.test, data.pop, k,
                                                     cfg.eval.exclude_history, t));
    }
    write_decile_csv(deciles, out_path(cfg, "decile_report.csv").string());
  });
}

void run_gap_check(const RunConfig& cfg, std::size_t threads) {
  validate_config(cfg);
  const std::size_t t = resolve_threads(threads);
  prepare_output_dir(cfg);

  DataBundle data;
  run_stage(cfg, Stage::load, [&] { data.log = load_log(cfg, &data.groups); });
  run_stage(cfg, Stage::split, [&] { split_data(cfg, data); });
  run_stage(cfg, Stage::train, [&] { return require_checkpoint(cfg); });

  run_stage(cfg, Stage::gap, [&] {
    const fs::path mask_path = out_path(cfg, "mask.csv");
    const fs::path debiased_path = out_path(cfg, "model_debiased.bin");
    if (!fs::exists(mask_path) || !fs::exists(debiased_path)) {
      throw Error("gap check needs mask.csv and model_debiased.bin; run identify and unlearn "
                  "first");
    }
    const std::vector<std::size_t> selected = read_mask_selected(mask_path.string());
    const ModelState debiased = load_checkpoint(debiased_path.string());
    const ModelState retrained =
        retrain_oracle(data.split.train, data.log.item_count(), selected, cfg.train, t);
    save_checkpoint(retrained, out_path(cfg, "model_retrained.bin").string());
    const SampleSet remain = remove_samples(data.split.train, selected);
    const GapReport gap =
        gap_report(debiased, retrained, remain, data.split.test, data.pop, data.groups, cfg.eval,
                   t);
    write_gap_csv(gap, out_path(cfg, "gap.csv").string());
  });
}

GridResult grid_search(const RunConfig& cfg, const PipelineOptions& options) {
  validate_config(cfg);
  const std::size_t threads = resolve_threads(options.threads);
  prepare_output_dir(cfg);

  DataBundle data;
  run_stage(cfg, Stage::load, [&] { data.log = load_log(cfg, &data.groups); });
  run_stage(cfg, Stage::split, [&] { split_data(cfg, data); });

  ModelState model;
  run_stage(cfg, Stage::train, [&] {
    const fs::path ckpt = out_path(cfg, "model.bin");
    if (options.reuse_checkpoint && fs::exists(ckpt)) {
      model = load_checkpoint(ckpt.string());
    } else {
      model = train_backbone(data.split.train, data.log.item_count(), cfg.train, threads);
      save_checkpoint(model, ckpt.string());
    }
  });

  BiasValue bias;
  run_stage(cfg, Stage::bias, [&] {
    bias = evaluate_bias(model, bias_eval_subset(data.split.valid, cfg), data.pop, data.groups,
                         cfg.bias, threads);
  });
  InfluenceCache cache;
  run_stage(cfg, Stage::influence, [&] {
    const CandidateSet candidates =
        sample_candidates(data.split.train.size(), cfg.candidate_ratio, cfg.candidate_seed);
    const InfluenceVector iv =
        precompute_influence_vector(model, data.split.train, bias, cfg.cg, threads);
    cache = influence_scores(model, data.split.train, candidates, iv, cfg.bias, cfg.cg, threads);
  });

  // One unlearn solve and one validation pass per distinct selected set; grid
  // cells that pick the same samples share the cached outcome.
  struct Outcome {
    std::size_t size = 0;
    double hr = 0.0, apt = 0.0, fair = 0.0, fscore = 0.0;
  };
  std::map<std::vector<std::size_t>, Outcome> outcomes;
  const std::size_t k0 = cfg.eval.ks.front();

  auto score_selection = [&](const std::vector<std::size_t>& selected) -> const Outcome& {
    auto it = outcomes.find(selected);
    if (it != outcomes.end()) return it->second;

    const auto a = unlearn_step(model, data.split.train, selected, cfg.cg, threads, nullptr);
    EvalConfig eval_cfg = cfg.eval;
    eval_cfg.ks = {k0};
    const EvalReport report =
        evaluate_model(a.debiased, data.split.valid, data.pop, data.groups, eval_cfg, threads);
    const MetricRow& row = report.rows.front();

    Outcome out;
    out.size = selected.size();
    out.hr = row.hr;
    out.apt = row.apt;
    const bool table = cfg.eval.fscore == FScoreVariant::table;
    const double fair_pop = table ? row.apt : row.arp;
    const double fair_attr = table ? 1.0 - row.dp : 1.0 - row.hd;
    switch (cfg.bias.kind) {
      case BiasKind::popularity:
        out.fair = fair_pop;
        out.fscore = row.f_pop;
        break;
      case BiasKind::attribute:
        out.fair = fair_attr;
        out.fscore = row.f_attr;
        break;
      case BiasKind::combined:
        out.fair = 0.5 * (fair_pop + fair_attr);
        out.fscore = 0.5 * (row.f_pop + row.f_attr);
        break;
    }
    return outcomes.emplace(selected, out).first->second;
  };

  GridResult grid;
  run_stage(cfg, Stage::mask, [&] {
    for (const double lf : cfg.grid_values) {
      for (const double la : cfg.grid_values) {
        for (const double ls : cfg.grid_values) {
          MaskOptConfig mask_cfg = cfg.mask;
          mask_cfg.lambda_fair = lf;
          mask_cfg.lambda_acc = la;
          mask_cfg.lambda_spa = ls;
          const MaskState mask = optimize_mask(cache, mask_cfg);
          const Outcome& out = score_selection(select_unlearn_set(mask));

          GridRow row;
          row.lambda_fair = lf;
          row.lambda_acc = la;
          row.lambda_spa = ls;
          row.unlearn_size = out.size;
          row.hr = out.hr;
          row.apt = out.apt;
          row.fair = out.fair;
          row.fscore = out.fscore;
          grid.rows.push_back(row);
        }
      }
    }
    grid.best = 0;
    for (std::size_t i = 1; i < grid.rows.size(); ++i) {
      if (grid.rows[i].fscore > grid.rows[grid.best].fscore) grid.best = i;
    }
  });
  return grid;
}

void write_grid_csv(const GridResult& grid, const std::string& path) {
  std::string out = "lambda_fair,lambda_acc,lambda_spa,unlearn_size,hr,apt,fair,fscore,best\n";
  for (std::size_t i = 0; i < grid.rows.size(); ++i) {
    const GridRow& row = grid.rows[i];
    out += format_double(row.lambda_fair);
    out += "," + format_double(row.lambda_acc);
    out += "," + format_double(row.lambda_spa);
    out += "," + std::to_string(row.unlearn_size);
    out += "," + format_double(row.hr);
    out += "," + format_double(row.apt);
    out += "," + format_double(row.fair);
    out += "," + format_double(row.fscore);
    out += i == grid.best ? ",1\n" : ",0\n";
  }
  write_text_file(path, out);
}

}  // namespace debrec
