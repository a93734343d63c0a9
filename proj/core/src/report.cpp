#include "debrec/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace debrec {

namespace {

double parse_csv_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw ParseError("bad number: " + s, 0);
  return v;
}

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_metrics_csv(const std::vector<std::pair<std::string, EvalReport>>& stages,
                       const std::string& path) {
  std::string out = "stage,K,hr,ndcg,arp,apt,hd,dp,f_pop,f_attr\n";
  for (const auto& [stage, report] : stages) {
    for (const auto& row : report.rows) {
      out += stage;
      out += "," + std::to_string(row.k);
      out += "," + format_double(row.hr);
      out += "," + format_double(row.ndcg);
      out += "," + format_double(row.arp);
      out += "," + format_double(row.apt);
      out += "," + format_double(row.hd);
      out += "," + format_double(row.dp);
      out += "," + format_double(row.f_pop);
      out += "," + format_double(row.f_attr);
      out += "\n";
    }
  }
  write_text_file(path, out);
}

void write_influence_csv(const InfluenceCache& cache, const std::string& path) {
  std::string out = "# fingerprint=" + cache.fingerprint + "\n";
  out += "sample_id,influence,loss,grad_norm\n";
  for (const auto& e : cache.entries) {
    out += std::to_string(e.sample_id);
    out += "," + format_double(e.influence);
    out += "," + format_double(e.loss);
    out += "," + format_double(e.grad_norm);
    out += "\n";
  }
  write_text_file(path, out);
}

InfluenceCache read_influence_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  InfluenceCache cache;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.rfind("# fingerprint=", 0) == 0) {
      cache.fingerprint = line.substr(std::string("# fingerprint=").size());
      continue;
    }
    if (line.rfind("sample_id", 0) == 0) continue;
    const auto cells = split_csv_row(line);
    if (cells.size() != 4) throw ParseError(path + ": expected 4 columns", line_no);
    InfluenceEntry e;
    e.sample_id = static_cast<std::size_t>(std::strtoull(cells[0].c_str(), nullptr, 10));
    e.influence = parse_csv_double(cells[1]);
    e.loss = parse_csv_double(cells[2]);
    e.grad_norm = parse_csv_double(cells[3]);
    cache.entries.push_back(e);
  }
  return cache;
}

void write_mask_csv(const MaskState& mask, const InfluenceCache& cache,
                    const std::vector<std::size_t>& selected, const std::string& path) {
  if (mask.sample_ids.size() != cache.entries.size() ||
      static_cast<std::size_t>(mask.logits.size()) != cache.entries.size()) {
    throw AlignmentError("mask and influence cache sizes differ");
  }
  std::string out = "sample_id,final_logit,m,influence,loss,selected\n";
  std::size_t sel = 0;
  for (std::size_t i = 0; i < cache.entries.size(); ++i) {
    const auto& e = cache.entries[i];
    if (mask.sample_ids[i] != e.sample_id) {
      throw AlignmentError("mask sample ids diverge from the influence cache");
    }
    while (sel < selected.size() && selected[sel] < e.sample_id) ++sel;
    const bool is_selected = sel < selected.size() && selected[sel] == e.sample_id;
    const double logit = mask.logits[static_cast<Eigen::Index>(i)];
    const double m = 1.0 / (1.0 + std::exp(-logit));
    out += std::to_string(e.sample_id);
    out += "," + format_double(logit);
    out += "," + format_double(m);
    out += "," + format_double(e.influence);
    out += "," + format_double(e.loss);
    out += is_selected ? ",1\n" : ",0\n";
  }
  write_text_file(path, out);
}

std::vector<std::size_t> read_mask_selected(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::size_t> selected;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("sample_id", 0) == 0) continue;
    const auto cells = split_csv_row(line);
    if (cells.size() != 6) throw ParseError(path + ": expected 6 columns", line_no);
    if (cells[5] == "1") {
      selected.push_back(static_cast<std::size_t>(std::strtoull(cells[0].c_str(), nullptr, 10)));
    }
  }
  return selected;
}

void write_unlearn_json(const UnlearnResult& result, const std::string& path) {
  nlohmann::ordered_json j;
  j["n"] = result.n;
  j["n_unlearn"] = result.n_unlearn;
  j["delta_norm"] = result.delta_norm;
  j["cg_iterations"] = result.cg_iterations;
  j["cg_residual"] = result.cg_residual;
  j["damping"] = result.damping;
  j["stationarity_before"] = result.stationarity_before;
  j["stationarity_after"] = result.stationarity_after;
  write_text_file(path, j.dump(2) + "\n");
}

void write_gap_csv(const GapReport& report, const std::string& path) {
  std::string out = "metric,unlearned_value,retrained_value,gap\n";
  for (const auto& row : report.rows) {
    out += row.metric;
    out += "," + format_double(row.unlearned);
    out += "," + format_double(row.retrained);
    out += "," + format_double(row.gap);
    out += "\n";
  }
  out += "param_distance,,," + format_double(report.param_distance) + "\n";
  out += "stationarity," + format_double(report.stationarity_unlearned) + "," +
         format_double(report.stationarity_retrained) + "," +
         format_double(report.stationarity_unlearned - report.stationarity_retrained) + "\n";
  write_text_file(path, out);
}

std::vector<DecileRow> decile_report(const ModelState& model, const SampleSet& test,
                                     const PopularityTable& pop, std::size_t k,
                                     bool exclude_history, std::size_t threads) {
  const std::size_t item_count = pop.count.size();
  if (item_count == 0) throw EmptyInputError("decile report needs a popularity table");
  if (test.empty()) throw EmptyInputError("decile report needs test samples");

  // Rank items by training count descending, ties by id, then bucket ranks
  // into ten equal-width deciles; decile 0 holds the most popular items.
  std::vector<std::size_t> order(item_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pop.count[a] != pop.count[b]) return pop.count[a] > pop.count[b];
    return a < b;
  });
  std::vector<std::size_t> decile_of(item_count);
  for (std::size_t rank = 0; rank < item_count; ++rank) {
    decile_of[order[rank]] = std::min<std::size_t>(9, rank * 10 / item_count);
  }

  struct Acc {
    std::array<std::size_t, 10> rec{};
    std::array<std::size_t, 10> target{};
    std::size_t slots = 0;
  };
  std::vector<Acc> accs(block_count(test.size()));
  parallel_blocks(test.size(), threads, [&](std::size_t block, std::size_t begin, std::size_t end) {
    Acc& acc = accs[block];
    for (std::size_t i = begin; i < end; ++i) {
      const auto top = rank_top_k(model, test[i], k, exclude_history);
      for (const auto item : top) ++acc.rec[decile_of[item]];
      acc.slots += top.size();
      ++acc.target[decile_of[test[i].target]];
    }
  });
  Acc total;
  for (const auto& acc : accs) {
    for (std::size_t d = 0; d < 10; ++d) {
      total.rec[d] += acc.rec[d];
      total.target[d] += acc.target[d];
    }
    total.slots += acc.slots;
  }

  std::vector<DecileRow> rows(10);
  for (std::size_t d = 0; d < 10; ++d) {
    rows[d].decile = d;
    rows[d].item_share = 0.0;
  }
  for (std::size_t item = 0; item < item_count; ++item) ++rows[decile_of[item]].items;
  for (std::size_t d = 0; d < 10; ++d) {
    rows[d].item_share = static_cast<double>(rows[d].items) / static_cast<double>(item_count);
    rows[d].rec_share =
        total.slots == 0 ? 0.0
                         : static_cast<double>(total.rec[d]) / static_cast<double>(total.slots);
    rows[d].target_share = static_cast<double>(total.target[d]) / static_cast<double>(test.size());
  }
  return rows;
}

void write_decile_csv(const std::vector<std::pair<std::string, std::vector<DecileRow>>>& stages,
                      const std::string& path) {
  std::string out = "stage,decile,items,item_share,rec_share,target_share\n";
  for (const auto& [stage, rows] : stages) {
    for (const auto& row : rows) {
      out += stage;
      out += "," + std::to_string(row.decile);
      out += "," + std::to_string(row.items);
      out += "," + format_double(row.item_share);
      out += "," + format_double(row.rec_share);
      out += "," + format_double(row.target_share);
      out += "\n";
    }
  }
  write_text_file(path, out);
}

CostReport cost_report(const CostCounters& train, const CostCounters& identify,
                       const CostCounters& unlearn, std::size_t n, std::size_t n_candidates,
                       std::size_t n_unlearn, std::size_t epochs, double pinned_c) {
  CostReport r;
  r.train = train;
  r.identify = identify;
  r.unlearn = unlearn;
  r.n = n;
  r.n_candidates = n_candidates;
  r.n_unlearn = n_unlearn;
  r.epochs = epochs;

  // Bound form: grad evals <= c * (stage sample count + its CG iterations).
  const double identify_base =
      static_cast<double>(n_candidates) + static_cast<double>(identify.cg_iterations);
  const double unlearn_base =
      static_cast<double>(n_unlearn) + static_cast<double>(unlearn.cg_iterations);
  if (pinned_c > 0.0) {
    r.c = pinned_c;
    r.c_fitted = false;
  } else {
    double c = 0.0;
    if (identify_base > 0.0) {
      c = std::max(c, static_cast<double>(identify.grad_evals) / identify_base);
    }
    if (unlearn_base > 0.0) {
      c = std::max(c, static_cast<double>(unlearn.grad_evals) / unlearn_base);
    }
    r.c = c;
    r.c_fitted = true;
  }
  r.identify_bound = r.c * identify_base;
  r.unlearn_bound = r.c * unlearn_base;
  r.identify_violation = static_cast<double>(identify.grad_evals) > 1.1 * r.identify_bound;
  r.unlearn_violation =
      n_unlearn > 0 && static_cast<double>(unlearn.grad_evals) > 1.1 * r.unlearn_bound;
  return r;
}

void write_cost_json(const CostReport& report, const std::string& path) {
  auto counters = [](const CostCounters& c) {
    nlohmann::ordered_json j;
    j["grad_evals"] = c.grad_evals;
    j["cg_iterations"] = c.cg_iterations;
    j["hvp_passes"] = c.hvp_passes;
    return j;
  };
  nlohmann::ordered_json j;
  j["n"] = report.n;
  j["n_candidates"] = report.n_candidates;
  j["n_unlearn"] = report.n_unlearn;
  j["train_epochs"] = report.epochs;
  j["train"] = counters(report.train);
  j["identify"] = counters(report.identify);
  j["unlearn"] = counters(report.unlearn);
  j["c"] = report.c;
  j["c_fitted"] = report.c_fitted;
  j["identify_bound"] = report.identify_bound;
  j["unlearn_bound"] = report.unlearn_bound;
  j["identify_violation"] = report.identify_violation;
  j["unlearn_violation"] = report.unlearn_violation;
  write_text_file(path, j.dump(2) + "\n");
}

void write_config_resolved(const RunConfig& cfg, const std::string& path) {
  write_text_file(path, serialize_config(cfg));
}

void write_failed_marker(const std::string& out_dir, const std::string& stage,
                         const std::string& message) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::string body = "stage=" + stage + "\n" + message + "\n";
  write_text_file((std::filesystem::path(out_dir) / "FAILED").string(), body);
}

}  // namespace debrec
