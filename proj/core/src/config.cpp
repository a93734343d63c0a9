#include "debrec/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace debrec {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw std::invalid_argument("not a number: " + s);
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a non-negative integer: " + s);
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("not a boolean: " + s);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(',', start);
    if (pos == std::string::npos) {
      parts.push_back(trim(s.substr(start)));
      break;
    }
    parts.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
  return parts;
}

std::string join_doubles(const std::vector<double>& vs) {
  std::string out;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (i) out += ",";
    out += format_double(vs[i]);
  }
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& vs) {
  std::string out;
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(vs[i]);
  }
  return out;
}

struct KeyHandler {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<std::pair<std::string, KeyHandler>>& key_table() {
  auto dbl = [](auto getter, auto setter) {
    return KeyHandler{[getter](const RunConfig& c) { return format_double(getter(c)); },
                      [setter](RunConfig& c, const std::string& v) { setter(c, parse_double(v)); }};
  };
  auto u64 = [](auto getter, auto setter) {
    return KeyHandler{[getter](const RunConfig& c) { return std::to_string(getter(c)); },
                      [setter](RunConfig& c, const std::string& v) { setter(c, parse_u64(v)); }};
  };
  auto str = [](auto getter, auto setter) {
    return KeyHandler{[getter](const RunConfig& c) { return getter(c); },
                      [setter](RunConfig& c, const std::string& v) { setter(c, v); }};
  };
  auto bl = [](auto getter, auto setter) {
    return KeyHandler{
        [getter](const RunConfig& c) { return getter(c) ? std::string("true") : std::string("false"); },
        [setter](RunConfig& c, const std::string& v) { setter(c, parse_bool(v)); }};
  };

  static const std::vector<std::pair<std::string, KeyHandler>> table = {
      {"bias.alpha", dbl([](const RunConfig& c) { return c.bias.alpha; },
                         [](RunConfig& c, double v) { c.bias.alpha = v; })},
      {"bias.eval_cap", u64([](const RunConfig& c) { return c.bias_eval_cap; },
                            [](RunConfig& c, std::uint64_t v) { c.bias_eval_cap = v; })},
      {"bias.eval_seed", u64([](const RunConfig& c) { return c.bias_eval_seed; },
                             [](RunConfig& c, std::uint64_t v) { c.bias_eval_seed = v; })},
      {"bias.kind",
       KeyHandler{[](const RunConfig& c) -> std::string {
                    switch (c.bias.kind) {
                      case BiasKind::popularity: return "popularity";
                      case BiasKind::attribute: return "attribute";
                      case BiasKind::combined: return "combined";
                    }
                    return "popularity";
                  },
                  [](RunConfig& c, const std::string& v) {
                    if (v == "popularity") c.bias.kind = BiasKind::popularity;
                    else if (v == "attribute") c.bias.kind = BiasKind::attribute;
                    else if (v == "combined") c.bias.kind = BiasKind::combined;
                    else throw std::invalid_argument("bias.kind must be popularity|attribute|combined");
                  }}},
      {"cg.damping", dbl([](const RunConfig& c) { return c.cg.damping; },
                         [](RunConfig& c, double v) { c.cg.damping = v; })},
      {"cg.max_iter", u64([](const RunConfig& c) { return c.cg.max_iter; },
                          [](RunConfig& c, std::uint64_t v) { c.cg.max_iter = v; })},
      {"cg.tol", dbl([](const RunConfig& c) { return c.cg.tol; },
                     [](RunConfig& c, double v) { c.cg.tol = v; })},
      {"cost.c", dbl([](const RunConfig& c) { return c.cost_c; },
                     [](RunConfig& c, double v) { c.cost_c = v; })},
      {"data.attributes", str([](const RunConfig& c) { return c.attributes; },
                              [](RunConfig& c, const std::string& v) { c.attributes = v; })},
      {"data.head_fraction", dbl([](const RunConfig& c) { return c.popularity.head_fraction; },
                                 [](RunConfig& c, double v) { c.popularity.head_fraction = v; })},
      {"data.interactions", str([](const RunConfig& c) { return c.interactions; },
                                [](RunConfig& c, const std::string& v) { c.interactions = v; })},
      {"data.max_history", u64([](const RunConfig& c) { return c.split.max_history; },
                               [](RunConfig& c, std::uint64_t v) { c.split.max_history = v; })},
      {"data.periods", u64([](const RunConfig& c) { return c.split.periods; },
                           [](RunConfig& c, std::uint64_t v) { c.split.periods = v; })},
      {"data.popularity_counting",
       KeyHandler{[](const RunConfig& c) -> std::string {
                    return c.popularity.counting == PopularityCounting::targets
                               ? "targets"
                               : "targets_plus_history";
                  },
                  [](RunConfig& c, const std::string& v) {
                    if (v == "targets") c.popularity.counting = PopularityCounting::targets;
                    else if (v == "targets_plus_history")
                      c.popularity.counting = PopularityCounting::targets_plus_history;
                    else
                      throw std::invalid_argument(
                          "data.popularity_counting must be targets|targets_plus_history");
                  }}},
      {"data.popularity_value",
       KeyHandler{[](const RunConfig& c) -> std::string {
                    switch (c.popularity.value) {
                      case PopularityValue::log: return "log";
                      case PopularityValue::raw: return "raw";
                      case PopularityValue::max_ratio: return "max_ratio";
                    }
                    return "log";
                  },
                  [](RunConfig& c, const std::string& v) {
                    if (v == "log") c.popularity.value = PopularityValue::log;
                    else if (v == "raw") c.popularity.value = PopularityValue::raw;
                    else if (v == "max_ratio") c.popularity.value = PopularityValue::max_ratio;
                    else throw std::invalid_argument("data.popularity_value must be log|raw|max_ratio");
                  }}},
      {"data.test_periods", u64([](const RunConfig& c) { return c.split.test_periods; },
                                [](RunConfig& c, std::uint64_t v) { c.split.test_periods = v; })},
      {"data.train_periods", u64([](const RunConfig& c) { return c.split.train_periods; },
                                 [](RunConfig& c, std::uint64_t v) { c.split.train_periods = v; })},
      {"data.valid_periods", u64([](const RunConfig& c) { return c.split.valid_periods; },
                                 [](RunConfig& c, std::uint64_t v) { c.split.valid_periods = v; })},
      {"eval.exclude_history", bl([](const RunConfig& c) { return c.eval.exclude_history; },
                                  [](RunConfig& c, bool v) { c.eval.exclude_history = v; })},
      {"eval.fscore",
       KeyHandler{[](const RunConfig& c) -> std::string {
                    return c.eval.fscore == FScoreVariant::table ? "table" : "text";
                  },
                  [](RunConfig& c, const std::string& v) {
                    if (v == "table") c.eval.fscore = FScoreVariant::table;
                    else if (v == "text") c.eval.fscore = FScoreVariant::text;
                    else throw std::invalid_argument("eval.fscore must be table|text");
                  }}},
      {"eval.ks",
       KeyHandler{[](const RunConfig& c) { return join_sizes(c.eval.ks); },
                  [](RunConfig& c, const std::string& v) {
                    std::vector<std::size_t> ks;
                    for (const auto& part : split_list(v)) ks.push_back(parse_u64(part));
                    if (ks.empty()) throw std::invalid_argument("eval.ks must not be empty");
                    c.eval.ks = std::move(ks);
                  }}},
      {"eval.tau", dbl([](const RunConfig& c) { return c.eval.tau; },
                       [](RunConfig& c, double v) { c.eval.tau = v; })},
      {"grid.values",
       KeyHandler{[](const RunConfig& c) { return join_doubles(c.grid_values); },
                  [](RunConfig& c, const std::string& v) {
                    std::vector<double> vs;
                    for (const auto& part : split_list(v)) vs.push_back(parse_double(part));
                    if (vs.empty()) throw std::invalid_argument("grid.values must not be empty");
                    c.grid_values = std::move(vs);
                  }}},
      {"mask.candidate_ratio", dbl([](const RunConfig& c) { return c.candidate_ratio; },
                                   [](RunConfig& c, double v) { c.candidate_ratio = v; })},
      {"mask.init_logit", dbl([](const RunConfig& c) { return c.mask.init_logit; },
                              [](RunConfig& c, double v) { c.mask.init_logit = v; })},
      {"mask.iterations", u64([](const RunConfig& c) { return c.mask.iterations; },
                              [](RunConfig& c, std::uint64_t v) { c.mask.iterations = v; })},
      {"mask.lambda_acc", dbl([](const RunConfig& c) { return c.mask.lambda_acc; },
                              [](RunConfig& c, double v) { c.mask.lambda_acc = v; })},
      {"mask.lambda_fair", dbl([](const RunConfig& c) { return c.mask.lambda_fair; },
                               [](RunConfig& c, double v) { c.mask.lambda_fair = v; })},
      {"mask.lambda_spa", dbl([](const RunConfig& c) { return c.mask.lambda_spa; },
                              [](RunConfig& c, double v) { c.mask.lambda_spa = v; })},
      {"mask.lr", dbl([](const RunConfig& c) { return c.mask.lr; },
                      [](RunConfig& c, double v) { c.mask.lr = v; })},
      {"mask.seed", u64([](const RunConfig& c) { return c.candidate_seed; },
                        [](RunConfig& c, std::uint64_t v) { c.candidate_seed = v; })},
      {"model.dim", u64([](const RunConfig& c) { return c.train.d; },
                        [](RunConfig& c, std::uint64_t v) {
                          c.train.d = static_cast<std::uint32_t>(v);
                        })},
      {"model.reg", dbl([](const RunConfig& c) { return c.train.reg; },
                        [](RunConfig& c, double v) { c.train.reg = v; })},
      {"output.dir", str([](const RunConfig& c) { return c.output_dir; },
                         [](RunConfig& c, const std::string& v) { c.output_dir = v; })},
      {"train.epochs", u64([](const RunConfig& c) { return c.train.epochs; },
                           [](RunConfig& c, std::uint64_t v) { c.train.epochs = v; })},
      {"train.grad_tol", dbl([](const RunConfig& c) { return c.train.grad_tol; },
                             [](RunConfig& c, double v) { c.train.grad_tol = v; })},
      {"train.lr", dbl([](const RunConfig& c) { return c.train.lr; },
                       [](RunConfig& c, double v) { c.train.lr = v; })},
      {"train.seed", u64([](const RunConfig& c) { return c.train.seed; },
                         [](RunConfig& c, std::uint64_t v) { c.train.seed = v; })},
  };
  return table;
}

const KeyHandler* find_key(const std::string& key) {
  for (const auto& [k, h] : key_table()) {
    if (k == key) return &h;
  }
  return nullptr;
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw std::invalid_argument("override must look like key=value: " + assignment);
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  const KeyHandler* h = find_key(key);
  if (!h) throw std::invalid_argument("unknown config key: " + key);
  h->set(cfg, value);
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    try {
      apply_override(cfg, stripped);
    } catch (const std::invalid_argument& e) {
      throw ParseError(origin + ": " + e.what(), line_no);
    }
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, h] : key_table()) {
    out += key;
    out += " = ";
    out += h.get(cfg);
    out += "\n";
  }
  return out;
}

void validate_config(const RunConfig& cfg) {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
  if (cfg.split.periods == 0 ||
      cfg.split.train_periods + cfg.split.valid_periods + cfg.split.test_periods !=
          cfg.split.periods) {
    fail("data periods must satisfy train+valid+test = periods, all positive");
  }
  if (cfg.split.train_periods == 0 || cfg.split.valid_periods == 0 || cfg.split.test_periods == 0) {
    fail("data periods must all be positive");
  }
  if (cfg.split.max_history == 0) fail("data.max_history must be positive");
  if (!(cfg.popularity.head_fraction > 0.0) || cfg.popularity.head_fraction > 1.0) {
    fail("data.head_fraction must be in (0, 1]");
  }
  if (cfg.train.d == 0) fail("model.dim must be positive");
  if (cfg.train.reg < 0.0) fail("model.reg must be non-negative");
  if (cfg.train.lr < 0.0) fail("train.lr must be non-negative");
  if (!(cfg.train.grad_tol > 0.0)) fail("train.grad_tol must be positive");
  if (cfg.bias.alpha < 0.0 || cfg.bias.alpha > 1.0) fail("bias.alpha must be in [0, 1]");
  if (!(cfg.candidate_ratio > 0.0) || cfg.candidate_ratio > 1.0) {
    fail("mask.candidate_ratio must be in (0, 1]");
  }
  if (cfg.mask.lr < 0.0) fail("mask.lr must be non-negative");
  if (cfg.cg.damping < 0.0) fail("cg.damping must be non-negative");
  if (!(cfg.cg.tol > 0.0)) fail("cg.tol must be positive");
  if (cfg.cg.max_iter == 0) fail("cg.max_iter must be positive");
  if (cfg.eval.ks.empty()) fail("eval.ks must not be empty");
  for (std::size_t i = 0; i < cfg.eval.ks.size(); ++i) {
    if (cfg.eval.ks[i] == 0) fail("eval.ks entries must be positive");
    if (i > 0 && cfg.eval.ks[i] <= cfg.eval.ks[i - 1]) fail("eval.ks must be ascending");
  }
  if (!(cfg.eval.tau > 0.0)) fail("eval.tau must be positive");
  if (cfg.grid_values.empty()) fail("grid.values must not be empty");
  if (cfg.cost_c < 0.0) fail("cost.c must be non-negative");
  if (cfg.output_dir.empty()) fail("output.dir must not be empty");
}

}  // namespace debrec
