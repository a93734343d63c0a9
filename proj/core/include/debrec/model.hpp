#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "debrec/common.hpp"
#include "debrec/cost.hpp"
#include "debrec/dataset.hpp"

namespace debrec {

// Next-item model: q = adapter * mean(history embeddings), items scored by
// squared Euclidean distance to q, probabilities softmax(-distance). The item
// embeddings are frozen after seeding; only the d x d adapter trains. The
// per-sample loss -log P(target) + (reg/2)||theta||^2 is convex in the
// flattened adapter (the -||q||^2 terms cancel inside the log-sum-exp).
struct ModelState {
  std::uint32_t d = 0;
  std::uint32_t item_count = 0;
  double reg = 0.0;
  std::uint64_t seed = 0;
  Mat item_emb;  // item_count x d, frozen
  Mat adapter;   // d x d, trainable

  std::size_t param_count() const { return static_cast<std::size_t>(d) * d; }
  ParamVector params() const;                 // row-major flatten of adapter
  void set_params(const ParamVector& theta);  // inverse of params()
};

struct TrainConfig {
  std::uint32_t d = 16;
  double reg = 1e-3;
  std::size_t epochs = 2000;
  double lr = 0.1;
  std::uint64_t seed = 42;
  double grad_tol = 1e-6;
};

struct TrainStats {
  std::size_t epochs_run = 0;
  double final_grad_norm = 0.0;
  double final_loss = 0.0;
};

// Precomputed per-sample inputs: mean history embedding rows and targets.
// Valid only for the (model, samples) pair it was built from.
struct SampleFeatures {
  Mat X;                              // n x d mean history embeddings
  std::vector<std::uint32_t> target;  // n
};

SampleFeatures build_features(const ModelState& model, const SampleSet& samples);

// Frozen embeddings from the seed, identity adapter, then full-batch gradient
// descent on the mean per-sample loss until grad_tol or epochs run out.
// Non-finite loss aborts with the offending epoch.
ModelState train_backbone(const SampleSet& train, std::size_t item_count,
                          const TrainConfig& cfg, std::size_t threads = 1,
                          CostCounters* cost = nullptr, TrainStats* stats = nullptr);

// Distances and probabilities for one sample; probs use max-shift softmax.
struct ItemDistribution {
  Vec distances;
  Vec probs;
};
ItemDistribution item_distribution(const ModelState& model, const Sample& sample);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};
LossGrad sample_loss_and_grad(const ModelState& model, const Sample& sample);

// Mean loss and gradient over a sample set; the reduction runs over fixed
// blocks combined in order, so the result is bitwise independent of threads.
LossGrad mean_loss_and_grad(const ModelState& model, const SampleSet& samples,
                            std::size_t threads = 1, CostCounters* cost = nullptr);

// Hessian-vector products of the mean loss at the model's current parameters.
// Per-sample softmax state is cached at construction, so repeated applies
// (one per CG iteration) cost one pass over the samples each.
class HvpOperator {
 public:
  HvpOperator(const ModelState& model, const SampleSet& samples, std::size_t threads = 1);

  ParamVector apply(const ParamVector& v, CostCounters* cost = nullptr) const;
  std::size_t sample_count() const { return n_; }

 private:
  const ModelState& model_;
  std::size_t n_;
  std::size_t threads_;
  Mat X_;      // n x d mean history embeddings
  Mat probs_;  // n x item_count softmax rows at construction time
};

enum class HvpMode { analytic, finite_difference };

// One-shot Hessian-vector product. finite_difference uses central differences
// of the mean gradient with perturbation size 1e-5 * (1 + ||v||).
ParamVector hvp(const ModelState& model, const SampleSet& samples, const ParamVector& v,
                HvpMode mode = HvpMode::analytic, std::size_t threads = 1);

// Dense d^2 x d^2 Hessian of the mean loss; guarded to d^2 <= 4096.
Mat exact_hessian(const ModelState& model, const SampleSet& samples);

// Top-k items by ascending distance, ties by ascending item id. Optionally
// drops the sample's history items before ranking. k is clamped to the
// number of rankable items.
std::vector<std::uint32_t> rank_top_k(const ModelState& model, const Sample& sample,
                                      std::size_t k, bool exclude_history = false);

// Binary checkpoint; round-trips bitwise.
void save_checkpoint(const ModelState& model, const std::string& path);
ModelState load_checkpoint(const std::string& path);

// Stable content hash of a model (shape, reg, seed, and all coefficients).
std::uint64_t model_fingerprint(const ModelState& model);

}  // namespace debrec
