#pragma once

#include <cstdint>
#include <string>

#include "debrec/dataset.hpp"

namespace debrec {

// Planted popularity bias: every user owns a small niche of tail items, but a
// bias_rate fraction of interactions is drawn from a global Zipf over all
// items instead. Item index equals popularity rank (0 = head of the Zipf).
// Used by tests and benchmarks; not part of the measurement pipeline.
struct SyntheticConfig {
  std::size_t users = 1000;
  std::size_t items = 200;
  double zipf_exponent = 1.2;
  std::size_t events_per_user_min = 8;
  std::size_t events_per_user_max = 20;
  double bias_rate = 0.3;         // probability an event is Zipf-drawn
  double bias_time_fraction = 1.0;  // Zipf draws only before this fraction of the span
  std::size_t niche_size = 5;     // tail items per user
  double tail_start_fraction = 0.2;  // niches draw from ranks >= this fraction
  bool with_groups = false;       // alternate users between labels "A"/"B"
  std::int64_t time_span = 1000000;
  std::uint64_t seed = 1;
};

struct SyntheticData {
  InteractionLog log;
  GroupAssignment groups;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// Writes the log (and groups, when present) as tab-separated files the
// loaders accept.
void write_interactions_tsv(const InteractionLog& log, const std::string& path);
void write_groups_tsv(const InteractionLog& log, const GroupAssignment& groups,
                      const std::string& path);

}  // namespace debrec
