#include "debrec/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace debrec {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sign_or_zero(double v) {
  if (v > 0.0) return 1.0;
  if (v < 0.0) return -1.0;
  return 0.0;
}

struct BiasAccum {
  double pop = 0.0;
  Mat pop_grad;
  double p_target[2] = {0.0, 0.0};
  Mat attr_grad[2];
  std::size_t group_count[2] = {0, 0};
};

}  // namespace

BiasValue evaluate_bias(const ModelState& model, const SampleSet& eval_set,
                        const PopularityTable& pop, const GroupAssignment& groups,
                        const BiasSpec& spec, std::size_t threads, CostCounters* cost) {
  if (eval_set.empty()) throw std::invalid_argument("evaluate_bias: empty evaluation set");
  if (spec.alpha < 0.0 || spec.alpha > 1.0) {
    throw std::invalid_argument("evaluate_bias: alpha outside [0, 1]");
  }
  if (pop.v_pop.size() != static_cast<Eigen::Index>(model.item_count)) {
    throw AlignmentError("evaluate_bias: popularity table does not match item count");
  }
  const bool want_pop = spec.kind != BiasKind::attribute;
  const bool want_attr = spec.kind != BiasKind::popularity;
  const Eigen::Index d = model.d;
  const std::size_t n = eval_set.size();

  std::vector<BiasAccum> partial(block_count(n));
  parallel_blocks(n, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
    BiasAccum acc;
    acc.pop_grad = Mat::Zero(d, d);
    acc.attr_grad[0] = Mat::Zero(d, d);
    acc.attr_grad[1] = Mat::Zero(d, d);
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& s = eval_set[i];
      Vec x = Vec::Zero(d);
      for (const auto item : s.history) x += model.item_emb.row(item).transpose();
      x /= static_cast<double>(s.history.size());
      const Vec q = model.adapter * x;
      const Vec dist = (model.item_emb.rowwise() - q.transpose()).rowwise().squaredNorm();
      const double dmin = dist.minCoeff();
      Vec probs = (dmin - dist.array()).exp();
      probs /= probs.sum();
      const Vec ebar = model.item_emb.transpose() * probs;

      if (want_pop) {
        const Vec pv = probs.cwiseProduct(pop.v_pop);
        acc.pop += pv.sum();
        // d/dq of sum_i p_i v_i = 2 (E'(p.*v) - (p.v) ebar)
        const Vec gq = 2.0 * (model.item_emb.transpose() * pv - pv.sum() * ebar);
        acc.pop_grad += gq * x.transpose();
      }
      if (want_attr) {
        const int g = groups.of_user(s.user);
        if (g == 0 || g == 1) {
          const double pt = probs[s.target];
          acc.p_target[g] += pt;
          // d/dq of p_target = 2 p_target (e_target - ebar)
          const Vec gq = 2.0 * pt * (model.item_emb.row(s.target).transpose() - ebar);
          acc.attr_grad[g] += gq * x.transpose();
          acc.group_count[g] += 1;
        }
      }
    }
    partial[b] = std::move(acc);
  });

  double pop_value = 0.0;
  Mat pop_grad = Mat::Zero(d, d);
  double p_sum[2] = {0.0, 0.0};
  Mat attr_grad[2] = {Mat::Zero(d, d), Mat::Zero(d, d)};
  std::size_t count[2] = {0, 0};
  for (const auto& acc : partial) {
    pop_value += acc.pop;
    if (want_pop) pop_grad += acc.pop_grad;
    for (int g = 0; g < 2; ++g) {
      p_sum[g] += acc.p_target[g];
      if (want_attr) attr_grad[g] += acc.attr_grad[g];
      count[g] += acc.group_count[g];
    }
  }

  double value = 0.0;
  Mat grad = Mat::Zero(d, d);
  if (want_pop) {
    pop_value /= static_cast<double>(n);
    pop_grad /= static_cast<double>(n);
    const double w = spec.kind == BiasKind::combined ? spec.alpha : 1.0;
    value += w * pop_value;
    grad += w * pop_grad;
  }
  if (want_attr) {
    if (count[0] == 0 || count[1] == 0) {
      throw DegenerateError("evaluate_bias: attribute bias needs samples from both groups");
    }
    const double mean0 = p_sum[0] / static_cast<double>(count[0]);
    const double mean1 = p_sum[1] / static_cast<double>(count[1]);
    const Mat g0 = attr_grad[0] / static_cast<double>(count[0]);
    const Mat g1 = attr_grad[1] / static_cast<double>(count[1]);
    const double sgn = sign_or_zero(mean0 - mean1);
    const double w = spec.kind == BiasKind::combined ? 1.0 - spec.alpha : 1.0;
    value += w * std::abs(mean0 - mean1);
    grad += w * sgn * (g0 - g1);
  }

  BiasValue out;
  out.value = value;
  out.grad.resize(model.param_count());
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) out.grad[r * d + c] = grad(r, c);
  if (cost) cost->grad_evals += n;
  return out;
}

double f_score(double hr, double fair, double tau) {
  if (!(hr >= 0.0) || !(fair >= 0.0)) {
    throw std::invalid_argument("f_score: hr and fair must be non-negative");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("f_score: tau must be positive");
  const double denom = tau * hr + fair;
  if (denom == 0.0) return 0.0;
  return 2.0 * (tau * hr * fair) / denom;
}

namespace {

struct MetricAccum {
  // Indexed by K position.
  std::vector<double> hits, ndcg, arp, apt;
  std::vector<double> hits_g0, hits_g1;
  std::vector<std::vector<std::uint32_t>> occ_g0, occ_g1;  // per K, per item
  std::size_t n_g0 = 0, n_g1 = 0;

  void init(std::size_t nk, std::size_t items) {
    hits.assign(nk, 0.0);
    ndcg.assign(nk, 0.0);
    arp.assign(nk, 0.0);
    apt.assign(nk, 0.0);
    hits_g0.assign(nk, 0.0);
    hits_g1.assign(nk, 0.0);
    occ_g0.assign(nk, std::vector<std::uint32_t>(items, 0));
    occ_g1.assign(nk, std::vector<std::uint32_t>(items, 0));
  }
};

}  // namespace

EvalReport evaluate_model(const ModelState& model, const SampleSet& test,
                          const PopularityTable& pop, const GroupAssignment& groups,
                          const EvalConfig& cfg, std::size_t threads) {
  if (test.empty()) throw std::invalid_argument("evaluate_model: empty test set");
  if (cfg.ks.empty()) throw std::invalid_argument("evaluate_model: no K values");
  for (const auto k : cfg.ks) {
    if (k == 0) throw std::invalid_argument("evaluate_model: K must be positive");
  }
  if (pop.v_pop.size() != static_cast<Eigen::Index>(model.item_count)) {
    throw AlignmentError("evaluate_model: popularity table does not match item count");
  }
  const std::size_t nk = cfg.ks.size();
  const std::size_t max_k = *std::max_element(cfg.ks.begin(), cfg.ks.end());
  const std::size_t n = test.size();

  std::vector<MetricAccum> partial(block_count(n));
  parallel_blocks(n, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
    MetricAccum acc;
    acc.init(nk, model.item_count);
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& s = test[i];
      const auto top = rank_top_k(model, s, max_k, cfg.exclude_history);
      const int g = groups.of_user(s.user);
      if (g == 0) acc.n_g0 += 1;
      if (g == 1) acc.n_g1 += 1;
      for (std::size_t ki = 0; ki < nk; ++ki) {
        const std::size_t k = std::min(cfg.ks[ki], top.size());
        double vp = 0.0;
        double tail = 0.0;
        bool hit = false;
        double gain = 0.0;
        for (std::size_t r = 0; r < k; ++r) {
          const auto item = top[r];
          vp += pop.v_pop[item];
          if (pop.is_tail(item)) tail += 1.0;
          if (item == s.target) {
            hit = true;
            gain = 1.0 / std::log2(static_cast<double>(r) + 2.0);
          }
          if (g == 0) acc.occ_g0[ki][item] += 1;
          if (g == 1) acc.occ_g1[ki][item] += 1;
        }
        if (hit) {
          acc.hits[ki] += 1.0;
          acc.ndcg[ki] += gain;
          if (g == 0) acc.hits_g0[ki] += 1.0;
          if (g == 1) acc.hits_g1[ki] += 1.0;
        }
        if (k > 0) acc.arp[ki] += vp / static_cast<double>(k);
        acc.apt[ki] += tail / static_cast<double>(cfg.ks[ki]);
      }
    }
    partial[b] = std::move(acc);
  });

  MetricAccum total;
  total.init(nk, model.item_count);
  for (const auto& acc : partial) {
    for (std::size_t ki = 0; ki < nk; ++ki) {
      total.hits[ki] += acc.hits[ki];
      total.ndcg[ki] += acc.ndcg[ki];
      total.arp[ki] += acc.arp[ki];
      total.apt[ki] += acc.apt[ki];
      total.hits_g0[ki] += acc.hits_g0[ki];
      total.hits_g1[ki] += acc.hits_g1[ki];
      for (std::size_t item = 0; item < model.item_count; ++item) {
        total.occ_g0[ki][item] += acc.occ_g0[ki][item];
        total.occ_g1[ki][item] += acc.occ_g1[ki][item];
      }
    }
    total.n_g0 += acc.n_g0;
    total.n_g1 += acc.n_g1;
  }

  EvalReport report;
  report.tau = cfg.tau;
  const auto m = static_cast<double>(n);
  for (std::size_t ki = 0; ki < nk; ++ki) {
    MetricRow row;
    row.k = cfg.ks[ki];
    row.hr = total.hits[ki] / m;
    row.ndcg = total.ndcg[ki] / m;
    row.arp = total.arp[ki] / m;
    row.apt = total.apt[ki] / m;
    if (total.n_g0 > 0 && total.n_g1 > 0) {
      const double hr0 = total.hits_g0[ki] / static_cast<double>(total.n_g0);
      const double hr1 = total.hits_g1[ki] / static_cast<double>(total.n_g1);
      row.hd = std::abs(hr0 - hr1);
      // Total-variation distance between per-item top-K frequencies.
      double tv = 0.0;
      const double den0 = static_cast<double>(cfg.ks[ki]) * static_cast<double>(total.n_g0);
      const double den1 = static_cast<double>(cfg.ks[ki]) * static_cast<double>(total.n_g1);
      for (std::size_t item = 0; item < model.item_count; ++item) {
        tv += std::abs(total.occ_g0[ki][item] / den0 - total.occ_g1[ki][item] / den1);
      }
      row.dp = 0.5 * tv;
    } else {
      row.hd = kNaN;
      row.dp = kNaN;
    }
    const double fair_pop = cfg.fscore == FScoreVariant::table ? row.apt : row.arp;
    row.f_pop = f_score(row.hr, fair_pop, cfg.tau);
    const double fair_attr =
        cfg.fscore == FScoreVariant::table ? 1.0 - row.dp : 1.0 - row.hd;
    row.f_attr = std::isfinite(fair_attr) ? f_score(row.hr, std::max(fair_attr, 0.0), cfg.tau)
                                          : kNaN;
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace debrec
