#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "debrec/common.hpp"

namespace debrec {

// One interaction row. user/item are dense indices assigned in order of first
// appearance in the input file.
struct Event {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::int64_t timestamp = 0;
};

struct InteractionLog {
  std::vector<Event> events;           // file order
  std::vector<std::string> user_ids;   // dense index -> original id
  std::vector<std::string> item_ids;
  std::size_t user_count() const { return user_ids.size(); }
  std::size_t item_count() const { return item_ids.size(); }
};

inline constexpr int kGroupUnknown = -1;

// Per-user binary group labels; group(u) in {0, 1, kGroupUnknown}.
struct GroupAssignment {
  std::vector<int> group;       // indexed by dense user id
  std::string label0, label1;   // original labels behind groups 0 and 1
  bool has_groups() const { return !label0.empty() || !label1.empty(); }
  int of_user(std::size_t u) const {
    return u < group.size() ? group[u] : kGroupUnknown;
  }
};

// Next-item sample: predict target from the items seen before it.
struct Sample {
  std::uint32_t user = 0;
  std::vector<std::uint32_t> history;  // most recent max_history items, oldest first
  std::uint32_t target = 0;
  std::int64_t timestamp = 0;
};

using SampleSet = std::vector<Sample>;

struct SplitConfig {
  std::size_t periods = 10;
  std::size_t train_periods = 8;
  std::size_t valid_periods = 1;
  std::size_t test_periods = 1;
  std::size_t max_history = 10;
};

struct SplitDataset {
  SampleSet train, valid, test;
  // Right (inclusive) edge of each period: the (i+1)/periods timestamp
  // quantiles of the event stream. Length equals SplitConfig::periods.
  std::vector<std::int64_t> period_boundaries;
};

enum class PopularityCounting { targets, targets_plus_history };
enum class PopularityValue { log, raw, max_ratio };

struct PopularityConfig {
  PopularityCounting counting = PopularityCounting::targets;
  PopularityValue value = PopularityValue::log;
  double head_fraction = 0.2;
};

struct PopularityTable {
  std::vector<std::int64_t> count;  // per item
  Vec v_pop;                        // per item
  std::vector<std::uint8_t> is_head;
  std::size_t head_count = 0;
  bool is_tail(std::size_t item) const { return !is_head[item]; }
};

// Indices into the training SampleSet, unique and ascending.
struct CandidateSet {
  std::vector<std::size_t> ids;
};

struct EmptyInputError : Error {
  using Error::Error;
};

// Reads `user<sep>item<sep>timestamp[<sep>rating]` rows, sep = tab or comma.
// A single leading header line is skipped when its timestamp field does not
// parse. Ratings are accepted and ignored.
InteractionLog load_interactions(const std::string& path);

// Reads `user<sep>group_label` rows against an existing log. The first two
// distinct labels map to groups 0 and 1 in order of appearance; the literal
// label "unknown" maps to no group; a third label is a parse error. Users
// absent from the log are ignored; users absent from the file stay unknown.
GroupAssignment load_groups(const std::string& path, const InteractionLog& log);

GroupAssignment empty_groups(const InteractionLog& log);

// Splits by timestamp quantiles into `periods` equal-count periods and
// assigns each sample to train/valid/test by its target period. Histories
// may reach back into earlier periods; targets never do the reverse.
SplitDataset temporal_split(const InteractionLog& log, const SplitConfig& cfg);

PopularityTable compute_popularity(const SampleSet& train, std::size_t item_count,
                                   const PopularityConfig& cfg = {});

// ceil(ratio * train_size) training indices, uniform without replacement.
CandidateSet sample_candidates(std::size_t train_size, double ratio, std::uint64_t seed);

// JSON sidecar mapping dense indices back to original ids.
void write_index_map(const InteractionLog& log, const std::string& path);

}  // namespace debrec
