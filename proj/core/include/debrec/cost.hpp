#pragma once

#include <cstdint>

namespace debrec {

// Work accounting in gradient-evaluation units. grad_evals counts per-sample
// gradient computations; each conjugate-gradient iteration is one batched
// Hessian-vector pass and is tracked separately, not multiplied out into its
// per-sample contributions.
struct CostCounters {
  std::uint64_t grad_evals = 0;
  std::uint64_t cg_iterations = 0;
  std::uint64_t hvp_passes = 0;

  void merge(const CostCounters& o) {
    grad_evals += o.grad_evals;
    cg_iterations += o.cg_iterations;
    hvp_passes += o.hvp_passes;
  }
};

}  // namespace debrec
