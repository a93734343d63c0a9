#include "debrec/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <vector>

namespace debrec {

namespace {

constexpr char kMagic[8] = {'D', 'B', 'R', 'M', 'O', 'D', 'L', '1'};
constexpr std::uint32_t kVersion = 1;

// Stable softmax of -distances for one row; returns log(sum exp) relative to
// the shift so the cross-entropy stays finite.
void softmax_neg(const Vec& dist, Vec& probs, double& dmin, double& log_z) {
  dmin = dist.minCoeff();
  probs = (dmin - dist.array()).exp();
  const double z = probs.sum();
  probs /= z;
  log_z = std::log(z);
}

struct BlockAccum {
  double loss = 0.0;
  Mat grad;  // d x d cross-entropy part
};

}  // namespace

ParamVector ModelState::params() const {
  ParamVector theta(param_count());
  for (std::uint32_t r = 0; r < d; ++r)
    for (std::uint32_t c = 0; c < d; ++c)
      theta[static_cast<Eigen::Index>(r) * d + c] = adapter(r, c);
  return theta;
}

void ModelState::set_params(const ParamVector& theta) {
  if (theta.size() != static_cast<Eigen::Index>(param_count())) {
    throw std::invalid_argument("set_params: parameter length mismatch");
  }
  for (std::uint32_t r = 0; r < d; ++r)
    for (std::uint32_t c = 0; c < d; ++c)
      adapter(r, c) = theta[static_cast<Eigen::Index>(r) * d + c];
}

SampleFeatures build_features(const ModelState& model, const SampleSet& samples) {
  SampleFeatures f;
  f.X.resize(static_cast<Eigen::Index>(samples.size()), model.d);
  f.target.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.history.empty()) throw std::invalid_argument("sample with empty history");
    Vec x = Vec::Zero(model.d);
    for (const auto item : s.history) {
      if (item >= model.item_count) throw std::invalid_argument("history item out of range");
      x += model.item_emb.row(item).transpose();
    }
    x /= static_cast<double>(s.history.size());
    f.X.row(static_cast<Eigen::Index>(i)) = x.transpose();
    if (s.target >= model.item_count) throw std::invalid_argument("target item out of range");
    f.target[i] = s.target;
  }
  return f;
}

ItemDistribution item_distribution(const ModelState& model, const Sample& sample) {
  if (sample.history.empty()) throw std::invalid_argument("sample with empty history");
  Vec x = Vec::Zero(model.d);
  for (const auto item : sample.history) {
    if (item >= model.item_count) throw std::invalid_argument("history item out of range");
    x += model.item_emb.row(item).transpose();
  }
  x /= static_cast<double>(sample.history.size());
  const Vec q = model.adapter * x;

  ItemDistribution out;
  out.distances = (model.item_emb.rowwise() - q.transpose()).rowwise().squaredNorm();
  double dmin, log_z;
  softmax_neg(out.distances, out.probs, dmin, log_z);
  return out;
}

LossGrad sample_loss_and_grad(const ModelState& model, const Sample& sample) {
  if (sample.target >= model.item_count) throw std::invalid_argument("target item out of range");
  Vec x = Vec::Zero(model.d);
  for (const auto item : sample.history) {
    if (item >= model.item_count) throw std::invalid_argument("history item out of range");
    x += model.item_emb.row(item).transpose();
  }
  if (sample.history.empty()) throw std::invalid_argument("sample with empty history");
  x /= static_cast<double>(sample.history.size());
  const Vec q = model.adapter * x;

  const Vec dist = (model.item_emb.rowwise() - q.transpose()).rowwise().squaredNorm();
  Vec probs;
  double dmin, log_z;
  softmax_neg(dist, probs, dmin, log_z);

  LossGrad out;
  const double ce = dist[sample.target] - dmin + log_z;
  const ParamVector theta = model.params();
  out.loss = ce + 0.5 * model.reg * theta.squaredNorm();

  // d(ce)/dq = 2 * (sum_i p_i e_i - e_target)
  const Vec ebar = model.item_emb.transpose() * probs;
  const Vec gq = 2.0 * (ebar - model.item_emb.row(sample.target).transpose());
  const Mat g = gq * x.transpose();
  out.grad.resize(model.param_count());
  for (std::uint32_t r = 0; r < model.d; ++r)
    for (std::uint32_t c = 0; c < model.d; ++c)
      out.grad[static_cast<Eigen::Index>(r) * model.d + c] = g(r, c);
  out.grad += model.reg * theta;
  return out;
}

LossGrad mean_loss_and_grad(const ModelState& model, const SampleSet& samples,
                            std::size_t threads, CostCounters* cost) {
  if (samples.empty()) throw std::invalid_argument("mean_loss_and_grad: empty sample set");
  const SampleFeatures f = build_features(model, samples);
  const std::size_t n = samples.size();
  const Eigen::Index d = model.d;

  const Vec item_sq = model.item_emb.rowwise().squaredNorm();
  std::vector<BlockAccum> partial(block_count(n));

  parallel_blocks(n, threads, [&](std::size_t b, std::size_t begin, std::size_t end) {
    const auto rows = static_cast<Eigen::Index>(end - begin);
    const auto off = static_cast<Eigen::Index>(begin);
    const Mat Xb = f.X.middleRows(off, rows);
    const Mat Qb = Xb * model.adapter.transpose();
    // dist(s, i) = ||q_s||^2 + ||e_i||^2 - 2 q_s . e_i
    Mat S = Qb * model.item_emb.transpose();
    const Vec qsq = Qb.rowwise().squaredNorm();

    BlockAccum acc;
    acc.grad = Mat::Zero(d, d);
    Mat Gq(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
      Vec dist = (item_sq.array() + qsq[r] - 2.0 * S.row(r).transpose().array()).matrix();
      double dmin, log_z;
      Vec probs;
      softmax_neg(dist, probs, dmin, log_z);
      const auto t = f.target[begin + static_cast<std::size_t>(r)];
      acc.loss += dist[t] - dmin + log_z;
      const Vec ebar = model.item_emb.transpose() * probs;
      Gq.row(r) = 2.0 * (ebar.transpose() - model.item_emb.row(t));
    }
    acc.grad = Gq.transpose() * Xb;
    partial[b] = std::move(acc);
  });

  double loss = 0.0;
  Mat grad = Mat::Zero(d, d);
  for (const auto& acc : partial) {
    loss += acc.loss;
    grad += acc.grad;
  }
  loss /= static_cast<double>(n);
  grad /= static_cast<double>(n);

  const ParamVector theta = model.params();
  LossGrad out;
  out.loss = loss + 0.5 * model.reg * theta.squaredNorm();
  out.grad.resize(model.param_count());
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) out.grad[r * d + c] = grad(r, c);
  out.grad += model.reg * theta;

  if (cost) cost->grad_evals += n;
  return out;
}

ModelState train_backbone(const SampleSet& train, std::size_t item_count, const TrainConfig& cfg,
                          std::size_t threads, CostCounters* cost, TrainStats* stats) {
  if (train.empty()) throw std::invalid_argument("train_backbone: empty training set");
  if (item_count == 0) throw std::invalid_argument("train_backbone: item_count is zero");
  if (cfg.d == 0) throw std::invalid_argument("train_backbone: embedding dim is zero");
  if (cfg.reg < 0.0) throw std::invalid_argument("train_backbone: negative reg");

  ModelState model;
  model.d = cfg.d;
  model.item_count = static_cast<std::uint32_t>(item_count);
  model.reg = cfg.reg;
  model.seed = cfg.seed;
  model.item_emb.resize(static_cast<Eigen::Index>(item_count), cfg.d);
  Rng rng(cfg.seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  for (Eigen::Index i = 0; i < model.item_emb.rows(); ++i)
    for (Eigen::Index j = 0; j < model.item_emb.cols(); ++j)
      model.item_emb(i, j) = (2.0 * rng.next_double() - 1.0) * scale;
  model.adapter = Mat::Identity(cfg.d, cfg.d);

  std::size_t epoch = 0;
  LossGrad lg;
  for (; epoch < cfg.epochs; ++epoch) {
    lg = mean_loss_and_grad(model, train, threads, cost);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      throw DivergenceError("train_backbone: non-finite loss", epoch);
    }
    const double gn = lg.grad.norm();
    if (gn < cfg.grad_tol) {
      if (stats) *stats = {epoch, gn, lg.loss};
      return model;
    }
    ParamVector theta = model.params();
    theta -= cfg.lr * lg.grad;
    model.set_params(theta);
  }
  lg = mean_loss_and_grad(model, train, threads, cost);
  if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
    throw DivergenceError("train_backbone: non-finite loss", epoch);
  }
  if (stats) *stats = {epoch, lg.grad.norm(), lg.loss};
  return model;
}

HvpOperator::HvpOperator(const ModelState& model, const SampleSet& samples, std::size_t threads)
    : model_(model), n_(samples.size()), threads_(threads) {
  if (samples.empty()) throw std::invalid_argument("HvpOperator: empty sample set");
  const SampleFeatures f = build_features(model, samples);
  X_ = f.X;
  // Softmax rows at the current parameters; the Hessian is evaluated here.
  probs_.resize(static_cast<Eigen::Index>(n_), model.item_count);
  const Vec item_sq = model.item_emb.rowwise().squaredNorm();
  parallel_blocks(n_, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    const auto rows = static_cast<Eigen::Index>(end - begin);
    const auto off = static_cast<Eigen::Index>(begin);
    const Mat Qb = X_.middleRows(off, rows) * model.adapter.transpose();
    const Mat S = Qb * model.item_emb.transpose();
    const Vec qsq = Qb.rowwise().squaredNorm();
    for (Eigen::Index r = 0; r < rows; ++r) {
      Vec dist = (item_sq.array() + qsq[r] - 2.0 * S.row(r).transpose().array()).matrix();
      Vec probs;
      double dmin, log_z;
      softmax_neg(dist, probs, dmin, log_z);
      probs_.row(off + r) = probs.transpose();
    }
  });
}

ParamVector HvpOperator::apply(const ParamVector& v, CostCounters* cost) const {
  const Eigen::Index d = model_.d;
  if (v.size() != d * d) throw std::invalid_argument("HvpOperator: vector length mismatch");
  Mat V(d, d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) V(r, c) = v[r * d + c];

  // Per sample: H_q = 4 * (E' diag(p) E - ebar ebar'), the softmax covariance
  // of the item embeddings; the chain rule through q = A x contributes the
  // rank-one factor x x'.
  std::vector<Mat> partial(block_count(n_), Mat());
  parallel_blocks(n_, threads_, [&](std::size_t b, std::size_t begin, std::size_t end) {
    const auto rows = static_cast<Eigen::Index>(end - begin);
    const auto off = static_cast<Eigen::Index>(begin);
    const Mat Xb = X_.middleRows(off, rows);
    const Mat Pb = probs_.middleRows(off, rows);
    const Mat Ub = Xb * V.transpose();                         // u_s = V x_s
    const Mat Sb = Ub * model_.item_emb.transpose();           // s_s = E u_s
    const Mat Tb = Pb.cwiseProduct(Sb);                        // p .* s
    const Mat W1 = Tb * model_.item_emb;                       // E'(p .* s)
    const Vec dots = Tb.rowwise().sum();                       // p . s
    const Mat Eb = Pb * model_.item_emb;                       // ebar rows
    const Mat Wq = 4.0 * (W1 - dots.asDiagonal() * Eb);
    partial[b] = Wq.transpose() * Xb;
  });

  Mat W = Mat::Zero(d, d);
  for (const auto& m : partial) W += m;
  W /= static_cast<double>(n_);

  ParamVector out(d * d);
  for (Eigen::Index r = 0; r < d; ++r)
    for (Eigen::Index c = 0; c < d; ++c) out[r * d + c] = W(r, c);
  out += model_.reg * v;
  if (cost) cost->hvp_passes += 1;
  return out;
}

ParamVector hvp(const ModelState& model, const SampleSet& samples, const ParamVector& v,
                HvpMode mode, std::size_t threads) {
  if (mode == HvpMode::analytic) {
    return HvpOperator(model, samples, threads).apply(v);
  }
  const double vn = v.norm();
  if (vn == 0.0) return ParamVector::Zero(v.size());
  // Perturbation of size 1e-5 * (1 + ||v||) along v.
  const double h = 1e-5 * (1.0 + vn) / vn;
  ModelState plus = model;
  ModelState minus = model;
  plus.set_params(model.params() + h * v);
  minus.set_params(model.params() - h * v);
  const LossGrad gp = mean_loss_and_grad(plus, samples, threads);
  const LossGrad gm = mean_loss_and_grad(minus, samples, threads);
  return (gp.grad - gm.grad) / (2.0 * h);
}

Mat exact_hessian(const ModelState& model, const SampleSet& samples) {
  const std::size_t p = model.param_count();
  if (p > 4096) {
    throw std::invalid_argument("exact_hessian: parameter count exceeds 4096");
  }
  if (samples.empty()) throw std::invalid_argument("exact_hessian: empty sample set");
  const Eigen::Index d = model.d;
  const SampleFeatures f = build_features(model, samples);
  const Vec item_sq = model.item_emb.rowwise().squaredNorm();

  Mat H = Mat::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Vec x = f.X.row(static_cast<Eigen::Index>(s)).transpose();
    const Vec q = model.adapter * x;
    Vec dist = (item_sq.array() + q.squaredNorm() - 2.0 * (model.item_emb * q).array()).matrix();
    Vec probs;
    double dmin, log_z;
    softmax_neg(dist, probs, dmin, log_z);
    const Vec ebar = model.item_emb.transpose() * probs;
    const Mat second = model.item_emb.transpose() * probs.asDiagonal() * model.item_emb;
    const Mat hq = 4.0 * (second - ebar * ebar.transpose());
    const Mat xxt = x * x.transpose();
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index r2 = 0; r2 < d; ++r2)
        H.block(r * d, r2 * d, d, d) += hq(r, r2) * xxt;
  }
  H /= static_cast<double>(samples.size());
  H += model.reg * Mat::Identity(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
  return H;
}

std::vector<std::uint32_t> rank_top_k(const ModelState& model, const Sample& sample,
                                      std::size_t k, bool exclude_history) {
  const ItemDistribution dist = item_distribution(model, sample);
  std::vector<std::uint32_t> order(model.item_count);
  std::iota(order.begin(), order.end(), 0);
  if (exclude_history) {
    std::vector<std::uint8_t> drop(model.item_count, 0);
    for (const auto item : sample.history) drop[item] = 1;
    order.erase(std::remove_if(order.begin(), order.end(),
                               [&](std::uint32_t i) { return drop[i] != 0; }),
                order.end());
  }
  const std::size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (dist.distances[a] != dist.distances[b])
                        return dist.distances[a] < dist.distances[b];
                      return a < b;
                    });
  order.resize(take);
  return order;
}

namespace {

void append_bytes(std::string& buf, const void* data, std::size_t size) {
  buf.append(static_cast<const char*>(data), size);
}

std::string serialize_model(const ModelState& model) {
  std::string buf;
  buf.reserve(64 + sizeof(double) * (model.item_emb.size() + model.adapter.size()));
  append_bytes(buf, kMagic, sizeof(kMagic));
  append_bytes(buf, &kVersion, sizeof(kVersion));
  append_bytes(buf, &model.seed, sizeof(model.seed));
  append_bytes(buf, &model.d, sizeof(model.d));
  append_bytes(buf, &model.item_count, sizeof(model.item_count));
  append_bytes(buf, &model.reg, sizeof(model.reg));
  for (Eigen::Index i = 0; i < model.item_emb.rows(); ++i)
    for (Eigen::Index j = 0; j < model.item_emb.cols(); ++j) {
      const double v = model.item_emb(i, j);
      append_bytes(buf, &v, sizeof(v));
    }
  for (Eigen::Index i = 0; i < model.adapter.rows(); ++i)
    for (Eigen::Index j = 0; j < model.adapter.cols(); ++j) {
      const double v = model.adapter(i, j);
      append_bytes(buf, &v, sizeof(v));
    }
  return buf;
}

}  // namespace

void save_checkpoint(const ModelState& model, const std::string& path) {
  const std::string buf = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write on checkpoint: " + path);
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  std::uint32_t version = 0;
  ModelState model;
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a model checkpoint: " + path);
  }
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kVersion) throw IoError("unsupported checkpoint version in " + path);
  in.read(reinterpret_cast<char*>(&model.seed), sizeof(model.seed));
  in.read(reinterpret_cast<char*>(&model.d), sizeof(model.d));
  in.read(reinterpret_cast<char*>(&model.item_count), sizeof(model.item_count));
  in.read(reinterpret_cast<char*>(&model.reg), sizeof(model.reg));
  if (!in) throw IoError("truncated checkpoint header: " + path);
  if (model.d == 0 || model.item_count == 0) throw IoError("bad checkpoint shape: " + path);
  model.item_emb.resize(model.item_count, model.d);
  model.adapter.resize(model.d, model.d);
  auto read_mat = [&](Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        m(i, j) = v;
      }
  };
  read_mat(model.item_emb);
  read_mat(model.adapter);
  if (!in) throw IoError("truncated checkpoint body: " + path);
  in.peek();
  if (!in.eof()) throw IoError("trailing bytes in checkpoint: " + path);
  return model;
}

std::uint64_t model_fingerprint(const ModelState& model) {
  const std::string buf = serialize_model(model);
  return fnv1a64(buf.data(), buf.size());
}

}  // namespace debrec
