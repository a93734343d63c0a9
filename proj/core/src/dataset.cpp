#include "debrec/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace debrec {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_row(const std::string& line) {
  // Tab wins when present so comma-bearing ids survive; otherwise comma.
  const char sep = line.find('\t') != std::string::npos ? '\t' : ',';
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

bool parse_i64(const std::string& s, std::int64_t& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

InteractionLog load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interactions file: " + path);

  InteractionLog log;
  std::unordered_map<std::string, std::uint32_t> user_index, item_index;
  auto intern = [](std::unordered_map<std::string, std::uint32_t>& index,
                   std::vector<std::string>& ids, const std::string& key) {
    auto [it, inserted] = index.emplace(key, static_cast<std::uint32_t>(ids.size()));
    if (inserted) ids.push_back(key);
    return it->second;
  };

  std::string line;
  std::size_t line_no = 0;
  bool saw_row = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_row(line);
    std::int64_t ts = 0;
    if (fields.size() < 3 || fields.size() > 4 || fields[0].empty() || fields[1].empty() ||
        !parse_i64(fields[2], ts)) {
      // A single unparsable leading line is an optional header.
      if (!saw_row && line_no == 1) continue;
      throw ParseError("malformed interaction row: " + line, line_no);
    }
    saw_row = true;
    Event ev;
    ev.user = intern(user_index, log.user_ids, fields[0]);
    ev.item = intern(item_index, log.item_ids, fields[1]);
    ev.timestamp = ts;
    log.events.push_back(ev);
  }
  if (!saw_row) throw EmptyInputError("no interaction rows in " + path);
  return log;
}

GroupAssignment empty_groups(const InteractionLog& log) {
  GroupAssignment g;
  g.group.assign(log.user_count(), kGroupUnknown);
  return g;
}

GroupAssignment load_groups(const std::string& path, const InteractionLog& log) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open attributes file: " + path);

  std::unordered_map<std::string, std::uint32_t> user_index;
  for (std::uint32_t u = 0; u < log.user_count(); ++u) user_index.emplace(log.user_ids[u], u);

  GroupAssignment g = empty_groups(log);
  std::string line;
  std::size_t line_no = 0;
  bool saw_row = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_row(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      if (!saw_row && line_no == 1) continue;  // optional header
      throw ParseError("malformed attribute row: " + line, line_no);
    }
    saw_row = true;
    const auto it = user_index.find(fields[0]);
    if (it == user_index.end()) continue;  // user never interacted

    std::string label = fields[1];
    std::string lower = label;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (lower == "unknown") continue;
    if (g.label0.empty() || label == g.label0) {
      g.label0 = label;
      g.group[it->second] = 0;
    } else if (g.label1.empty() || label == g.label1) {
      g.label1 = label;
      g.group[it->second] = 1;
    } else {
      throw ParseError("more than two group labels (saw '" + g.label0 + "', '" + g.label1 +
                           "', '" + label + "')",
                       line_no);
    }
  }
  if (!saw_row) throw EmptyInputError("no attribute rows in " + path);
  return g;
}

SplitDataset temporal_split(const InteractionLog& log, const SplitConfig& cfg) {
  if (cfg.periods == 0 || cfg.train_periods == 0 || cfg.valid_periods == 0 ||
      cfg.test_periods == 0) {
    throw std::invalid_argument("temporal_split: all period counts must be positive");
  }
  if (cfg.train_periods + cfg.valid_periods + cfg.test_periods != cfg.periods) {
    throw std::invalid_argument("temporal_split: train+valid+test periods must equal periods");
  }
  if (cfg.max_history == 0) throw std::invalid_argument("temporal_split: max_history must be positive");
  if (log.events.empty()) throw EmptyInputError("temporal_split: empty interaction log");

  std::vector<std::int64_t> ts;
  ts.reserve(log.events.size());
  for (const auto& ev : log.events) ts.push_back(ev.timestamp);
  std::sort(ts.begin(), ts.end());

  SplitDataset out;
  out.period_boundaries.resize(cfg.periods);
  for (std::size_t i = 0; i < cfg.periods; ++i) {
    // Right edge of period i: the (i+1)/periods quantile.
    const std::size_t rank = ((i + 1) * ts.size() + cfg.periods - 1) / cfg.periods;
    out.period_boundaries[i] = ts[std::min(rank, ts.size()) - 1];
  }
  out.period_boundaries.back() = ts.back();

  auto period_of = [&](std::int64_t t) {
    const auto it =
        std::lower_bound(out.period_boundaries.begin(), out.period_boundaries.end(), t);
    return static_cast<std::size_t>(it - out.period_boundaries.begin());
  };

  // Per-user event lists in stable time order (ties keep file order).
  std::vector<std::vector<std::size_t>> by_user(log.user_count());
  for (std::size_t i = 0; i < log.events.size(); ++i) by_user[log.events[i].user].push_back(i);

  for (auto& list : by_user) {
    std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
      return log.events[a].timestamp < log.events[b].timestamp;
    });
  }

  std::vector<std::uint32_t> history;
  for (std::uint32_t u = 0; u < log.user_count(); ++u) {
    history.clear();
    for (const std::size_t idx : by_user[u]) {
      const Event& ev = log.events[idx];
      if (!history.empty()) {
        Sample s;
        s.user = u;
        const std::size_t take = std::min(cfg.max_history, history.size());
        s.history.assign(history.end() - take, history.end());
        s.target = ev.item;
        s.timestamp = ev.timestamp;
        const std::size_t p = period_of(ev.timestamp);
        if (p < cfg.train_periods) {
          out.train.push_back(std::move(s));
        } else if (p < cfg.train_periods + cfg.valid_periods) {
          out.valid.push_back(std::move(s));
        } else {
          out.test.push_back(std::move(s));
        }
      }
      history.push_back(ev.item);
    }
  }

  if (out.train.empty() || out.valid.empty() || out.test.empty()) {
    throw DegenerateError("degenerate temporal split: train=" + std::to_string(out.train.size()) +
                          " valid=" + std::to_string(out.valid.size()) +
                          " test=" + std::to_string(out.test.size()));
  }
  return out;
}

PopularityTable compute_popularity(const SampleSet& train, std::size_t item_count,
                                   const PopularityConfig& cfg) {
  if (item_count == 0) throw std::invalid_argument("compute_popularity: item_count is zero");
  PopularityTable table;
  table.count.assign(item_count, 0);
  for (const Sample& s : train) {
    table.count[s.target] += 1;
    if (cfg.counting == PopularityCounting::targets_plus_history) {
      for (const auto item : s.history) table.count[item] += 1;
    }
  }

  table.v_pop.resize(static_cast<Eigen::Index>(item_count));
  const std::int64_t max_count = *std::max_element(table.count.begin(), table.count.end());
  for (std::size_t i = 0; i < item_count; ++i) {
    const double c = static_cast<double>(table.count[i]);
    switch (cfg.value) {
      case PopularityValue::log:
        table.v_pop[static_cast<Eigen::Index>(i)] = std::log1p(c);
        break;
      case PopularityValue::raw:
        table.v_pop[static_cast<Eigen::Index>(i)] = c;
        break;
      case PopularityValue::max_ratio:
        table.v_pop[static_cast<Eigen::Index>(i)] = max_count > 0 ? c / max_count : 0.0;
        break;
    }
  }

  std::vector<std::size_t> order(item_count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (table.count[a] != table.count[b]) return table.count[a] > table.count[b];
    return a < b;
  });
  table.head_count = static_cast<std::size_t>(
      std::ceil(cfg.head_fraction * static_cast<double>(item_count)));
  table.head_count = std::min(table.head_count, item_count);
  table.is_head.assign(item_count, 0);
  for (std::size_t r = 0; r < table.head_count; ++r) table.is_head[order[r]] = 1;
  return table;
}

CandidateSet sample_candidates(std::size_t train_size, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0) || ratio > 1.0) {
    throw std::invalid_argument("sample_candidates: ratio must be in (0, 1]");
  }
  if (train_size == 0) throw std::invalid_argument("sample_candidates: empty training set");
  const auto k = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(train_size)));
  Rng rng(seed);
  CandidateSet cs;
  cs.ids = rng.sample_without_replacement(train_size, std::min(k, train_size));
  return cs;
}

void write_index_map(const InteractionLog& log, const std::string& path) {
  nlohmann::json j;
  j["users"] = log.user_ids;
  j["items"] = log.item_ids;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write index map: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace debrec
