#include <doctest.h>

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "debrec/config.hpp"
#include "helpers.hpp"

using namespace debrec;
using debrec::testing::TempDir;

TEST_CASE("serialize and parse are a fixpoint on the defaults") {
  const RunConfig defaults;
  const std::string text = serialize_config(defaults);
  const RunConfig parsed = parse_config_text(text);
  CHECK(serialize_config(parsed) == text);
  validate_config(parsed);  // defaults are valid as-is
}

TEST_CASE("every key round-trips a non-default value") {
  // One representative non-default value per key; the pair survives
  // serialize -> parse -> serialize unchanged.
  const std::map<std::string, std::string> values = {
      {"bias.alpha", "0.25"},
      {"bias.eval_cap", "64"},
      {"bias.eval_seed", "99"},
      {"bias.kind", "attribute"},
      {"cg.damping", "0.01"},
      {"cg.max_iter", "321"},
      {"cg.tol", "1e-07"},
      {"cost.c", "2.5"},
      {"data.attributes", "groups.tsv"},
      {"data.head_fraction", "0.3"},
      {"data.interactions", "events.tsv"},
      {"data.max_history", "6"},
      {"data.periods", "12"},
      {"data.popularity_counting", "targets_plus_history"},
      {"data.popularity_value", "max_ratio"},
      {"data.test_periods", "2"},
      {"data.train_periods", "9"},
      {"data.valid_periods", "1"},
      {"eval.exclude_history", "true"},
      {"eval.fscore", "text"},
      {"eval.ks", "1,5,10"},
      {"eval.tau", "2"},
      {"grid.values", "0.5,5"},
      {"mask.candidate_ratio", "0.2"},
      {"mask.init_logit", "-1"},
      {"mask.iterations", "250"},
      {"mask.lambda_acc", "0.75"},
      {"mask.lambda_fair", "3"},
      {"mask.lambda_spa", "0.125"},
      {"mask.lr", "0.05"},
      {"mask.seed", "13"},
      {"model.dim", "8"},
      {"model.reg", "0.02"},
      {"output.dir", "elsewhere"},
      {"train.epochs", "77"},
      {"train.grad_tol", "1e-05"},
      {"train.lr", "0.3"},
      {"train.seed", "1234"},
  };

  RunConfig cfg;
  for (const auto& [key, value] : values) {
    apply_override(cfg, key + "=" + value);
  }
  const std::string text = serialize_config(cfg);
  for (const auto& [key, value] : values) {
    CAPTURE(key);
    CHECK(text.find(key + " = " + value + "\n") != std::string::npos);
  }
  const RunConfig parsed = parse_config_text(text);
  CHECK(serialize_config(parsed) == text);
  validate_config(parsed);

  // Spot-check the actual struct fields behind a few of the keys.
  CHECK(parsed.bias.kind == BiasKind::attribute);
  CHECK(parsed.split.periods == 12);
  CHECK(parsed.eval.ks == std::vector<std::size_t>{1, 5, 10});
  CHECK(parsed.grid_values == std::vector<double>{0.5, 5.0});
  CHECK(parsed.train.d == 8);
  CHECK(parsed.mask.init_logit == -1.0);
  CHECK(parsed.candidate_seed == 13);
  CHECK(parsed.eval.exclude_history);
  CHECK(parsed.popularity.counting == PopularityCounting::targets_plus_history);
}

TEST_CASE("parse_config_text handles comments, blanks, and spacing") {
  const RunConfig cfg = parse_config_text(
      "# experiment settings\n"
      "\n"
      "model.dim=4\n"
      "  train.lr   =   0.25   # inline comment\n"
      "eval.ks = 3 , 9\n");
  CHECK(cfg.train.d == 4);
  CHECK(cfg.train.lr == 0.25);
  CHECK(cfg.eval.ks == std::vector<std::size_t>{3, 9});
}

TEST_CASE("parse errors carry the file line") {
  try {
    parse_config_text("model.dim = 4\nnot a config line\n", "inline");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(std::string(e.what()).find("inline") != std::string::npos);
  }

  try {
    parse_config_text("no.such.key = 1\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 1);
  }

  try {
    parse_config_text("model.dim = eight\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 1);
  }
}

TEST_CASE("apply_override rejects unknown keys and malformed input") {
  RunConfig cfg;
  CHECK_THROWS_AS(apply_override(cfg, "nonsense"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(cfg, "data.unknown=3"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(cfg, "model.dim=zero"), std::invalid_argument);
  apply_override(cfg, "model.dim=5");  // key = value with spaces also accepted
  apply_override(cfg, " train.lr = 0.5 ");
  CHECK(cfg.train.d == 5);
  CHECK(cfg.train.lr == 0.5);
}

TEST_CASE("overrides win over file values") {
  TempDir dir("debrec-cfg");
  {
    std::ofstream out(dir.file("run.conf"));
    out << "model.dim = 4\ntrain.epochs = 10\n";
  }
  RunConfig cfg = parse_config_file(dir.file("run.conf"));
  CHECK(cfg.train.d == 4);
  CHECK(cfg.train.epochs == 10);
  apply_override(cfg, "model.dim=6");
  CHECK(cfg.train.d == 6);
  CHECK(cfg.train.epochs == 10);  // untouched keys keep the file value

  CHECK_THROWS_AS(parse_config_file(dir.file("absent.conf")), IoError);
}

TEST_CASE("validate_config rejects out-of-range settings") {
  auto expect_invalid = [](const std::string& assignment) {
    RunConfig cfg;
    apply_override(cfg, assignment);
    CAPTURE(assignment);
    CHECK_THROWS_AS(validate_config(cfg), std::invalid_argument);
  };

  expect_invalid("data.periods=9");  // 8+1+1 != 9
  expect_invalid("data.train_periods=0");
  expect_invalid("data.max_history=0");
  expect_invalid("data.head_fraction=0");
  expect_invalid("data.head_fraction=1.5");
  expect_invalid("model.dim=0");
  expect_invalid("model.reg=-1");
  expect_invalid("train.lr=-0.1");
  expect_invalid("train.grad_tol=0");
  expect_invalid("bias.alpha=1.5");
  expect_invalid("mask.candidate_ratio=0");
  expect_invalid("mask.candidate_ratio=1.0001");
  expect_invalid("mask.lr=-1");
  expect_invalid("cg.damping=-0.5");
  expect_invalid("cg.tol=0");
  expect_invalid("cg.max_iter=0");
  expect_invalid("eval.tau=0");
  expect_invalid("eval.ks=5,5");    // must be strictly ascending
  expect_invalid("eval.ks=20,5");
  expect_invalid("cost.c=-1");
  expect_invalid("output.dir=");

  // A consistent reshuffle of the periods passes.
  RunConfig ok;
  apply_override(ok, "data.periods=6");
  apply_override(ok, "data.train_periods=4");
  apply_override(ok, "data.valid_periods=1");
  apply_override(ok, "data.test_periods=1");
  validate_config(ok);
}

TEST_CASE("serialized output is sorted and newline-terminated") {
  const std::string text = serialize_config(RunConfig{});
  REQUIRE(!text.empty());
  CHECK(text.back() == '\n');
  std::vector<std::string> keys;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto eol = text.find('\n', pos);
    const auto line = text.substr(pos, eol - pos);
    keys.push_back(line.substr(0, line.find(" = ")));
    pos = eol + 1;
  }
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  CHECK(keys.size() == 38);  // every public key appears exactly once
}
