#pragma once

// Shared test utilities. Oracles here are deliberately independent of the
// library's internals: finite differences instead of analytic gradients,
// dense factorizations instead of CG, Newton instead of gradient descent.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "debrec/dataset.hpp"
#include "debrec/model.hpp"

namespace debrec::testing {

// Central finite differences of a scalar function.
inline Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                            double h = 1e-5) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const Vec& a, const Vec& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

// Random SPD matrix A = Q diag(eigs) Q^T with eigenvalues in [lo, hi].
inline Mat random_spd(std::mt19937_64& gen, Eigen::Index n, double lo = 0.5, double hi = 4.0) {
  std::normal_distribution<double> normal;
  Mat m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = normal(gen);
  const Eigen::HouseholderQR<Mat> qr(m);
  const Mat q = qr.householderQ();
  std::uniform_real_distribution<double> unif(lo, hi);
  Vec eigs(n);
  for (Eigen::Index i = 0; i < n; ++i) eigs[i] = unif(gen);
  return q * eigs.asDiagonal() * q.transpose();
}

// Spearman rank correlation; average ranks for ties.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return v[x] < v[y];
    });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double mean = (static_cast<double>(n) + 1.0) / 2.0;
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (ra[i] - mean) * (rb[i] - mean);
    da += (ra[i] - mean) * (ra[i] - mean);
    db += (rb[i] - mean) * (rb[i] - mean);
  }
  return num / std::sqrt(da * db);
}

// Random model with embeddings scaled like the trained backbone's and a
// perturbed adapter, so gradients are generic (not at a stationary point).
inline ModelState random_model(std::uint64_t seed, std::uint32_t d, std::uint32_t items,
                               double reg = 1e-3) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  ModelState m;
  m.d = d;
  m.item_count = items;
  m.reg = reg;
  m.seed = seed;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  m.item_emb.resize(items, d);
  for (std::uint32_t i = 0; i < items; ++i)
    for (std::uint32_t j = 0; j < d; ++j) m.item_emb(i, j) = unif(gen) * scale;
  m.adapter = Mat::Identity(d, d);
  for (std::uint32_t i = 0; i < d; ++i)
    for (std::uint32_t j = 0; j < d; ++j) m.adapter(i, j) += 0.3 * unif(gen);
  return m;
}

inline SampleSet random_samples(std::uint64_t seed, std::size_t n, std::uint32_t items,
                                std::size_t max_history = 4) {
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::uint32_t> item(0, items - 1);
  std::uniform_int_distribution<std::size_t> hist(1, max_history);
  SampleSet samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    samples[i].user = static_cast<std::uint32_t>(i % 7);
    const std::size_t h = hist(gen);
    samples[i].history.resize(h);
    for (auto& it : samples[i].history) it = item(gen);
    samples[i].target = item(gen);
    samples[i].timestamp = static_cast<std::int64_t>(i);
  }
  return samples;
}

// Exact minimizer of the mean sample loss by damped Newton on the dense
// Hessian; independent of train_backbone's gradient descent.
inline ModelState newton_minimize(const ModelState& init, const SampleSet& samples,
                                  double grad_tol = 1e-11, std::size_t max_iter = 60) {
  ModelState model = init;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const LossGrad lg = mean_loss_and_grad(model, samples);
    if (lg.grad.norm() < grad_tol) break;
    const Mat h = exact_hessian(model, samples);
    const Vec step = Eigen::LLT<Mat>(h).solve(lg.grad);
    model.set_params(model.params() - step);
  }
  return model;
}

// Unique temporary directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0; i < 10000; ++i) {
      auto candidate = base / (tag + "-" + std::to_string(i));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("TempDir: cannot create a fresh directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace debrec::testing
