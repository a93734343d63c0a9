#include "debrec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "debrec/report.hpp"

namespace debrec {

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.users == 0 || cfg.items == 0) throw std::invalid_argument("synthetic: empty shape");
  if (cfg.events_per_user_min == 0 || cfg.events_per_user_max < cfg.events_per_user_min) {
    throw std::invalid_argument("synthetic: bad events_per_user range");
  }
  if (cfg.bias_rate < 0.0 || cfg.bias_rate > 1.0) {
    throw std::invalid_argument("synthetic: bias_rate must be in [0, 1]");
  }
  if (cfg.bias_time_fraction < 0.0 || cfg.bias_time_fraction > 1.0) {
    throw std::invalid_argument("synthetic: bias_time_fraction must be in [0, 1]");
  }
  if (cfg.tail_start_fraction < 0.0 || cfg.tail_start_fraction >= 1.0) {
    throw std::invalid_argument("synthetic: tail_start_fraction must be in [0, 1)");
  }

  Rng rng(cfg.seed);

  // Zipf over ranks: P(item i) proportional to (i + 1)^-s. Item index equals
  // popularity rank by construction, so popularity checks can read ids.
  std::vector<double> cdf(cfg.items);
  double total = 0.0;
  for (std::size_t i = 0; i < cfg.items; ++i) {
    total += std::pow(static_cast<double>(i + 1), -cfg.zipf_exponent);
    cdf[i] = total;
  }
  auto draw_zipf = [&]() -> std::uint32_t {
    const double u = rng.next_double() * total;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const auto idx = static_cast<std::size_t>(it - cdf.begin());
    return static_cast<std::uint32_t>(std::min(idx, cfg.items - 1));
  };

  const auto tail_start = static_cast<std::size_t>(
      std::ceil(cfg.tail_start_fraction * static_cast<double>(cfg.items)));
  const std::size_t tail_count = cfg.items - tail_start;
  if (tail_count == 0) throw std::invalid_argument("synthetic: no tail items for niches");
  const std::size_t niche = std::min(cfg.niche_size, tail_count);

  SyntheticData data;
  data.log.user_ids.reserve(cfg.users);
  data.log.item_ids.reserve(cfg.items);
  for (std::size_t u = 0; u < cfg.users; ++u) data.log.user_ids.push_back("u" + std::to_string(u));
  for (std::size_t i = 0; i < cfg.items; ++i) data.log.item_ids.push_back("i" + std::to_string(i));

  // Contamination can be limited to the early part of the time span, modeling
  // a promotion window whose traffic the later (evaluation) periods lack. The
  // coin is drawn for every event so the corpus at fraction 1.0 is unchanged.
  const double bias_cutoff = cfg.bias_time_fraction * static_cast<double>(cfg.time_span);

  const std::size_t span = cfg.events_per_user_max - cfg.events_per_user_min + 1;
  for (std::size_t u = 0; u < cfg.users; ++u) {
    // Per-user niche: a random tail window. Draw order is fixed so the whole
    // corpus is a pure function of the seed.
    const std::size_t niche_base = tail_start + rng.next_below(tail_count - niche + 1);
    const std::size_t events = cfg.events_per_user_min + rng.next_below(span);
    std::vector<std::int64_t> times(events);
    for (auto& t : times) {
      t = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(cfg.time_span)));
    }
    std::sort(times.begin(), times.end());
    for (std::size_t e = 0; e < events; ++e) {
      Event ev;
      ev.user = static_cast<std::uint32_t>(u);
      ev.timestamp = times[e];
      const bool biased = rng.next_double() < cfg.bias_rate &&
                          static_cast<double>(ev.timestamp) < bias_cutoff;
      if (biased) {
        ev.item = draw_zipf();
      } else {
        ev.item = static_cast<std::uint32_t>(niche_base + rng.next_below(niche));
      }
      data.log.events.push_back(ev);
    }
  }

  if (cfg.with_groups) {
    data.groups.group.assign(cfg.users, kGroupUnknown);
    for (std::size_t u = 0; u < cfg.users; ++u) data.groups.group[u] = static_cast<int>(u % 2);
    data.groups.label0 = "A";
    data.groups.label1 = "B";
  } else {
    data.groups.group.assign(cfg.users, kGroupUnknown);
  }
  return data;
}

void write_interactions_tsv(const InteractionLog& log, const std::string& path) {
  std::string out = "user\titem\ttimestamp\n";
  for (const auto& ev : log.events) {
    out += log.user_ids[ev.user];
    out += "\t";
    out += log.item_ids[ev.item];
    out += "\t";
    out += std::to_string(ev.timestamp);
    out += "\n";
  }
  write_text_file(path, out);
}

void write_groups_tsv(const InteractionLog& log, const GroupAssignment& groups,
                      const std::string& path) {
  std::string out = "user\tgroup\n";
  for (std::size_t u = 0; u < log.user_count(); ++u) {
    const int g = groups.of_user(u);
    out += log.user_ids[u];
    out += "\t";
    if (g == 0) out += groups.label0;
    else if (g == 1) out += groups.label1;
    else out += "unknown";
    out += "\n";
  }
  write_text_file(path, out);
}

}  // namespace debrec
