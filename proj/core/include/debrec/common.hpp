#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace debrec {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Flattened view of the trainable adapter, row-major, length d*d.
using ParamVector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors. Each failure mode the pipeline distinguishes gets its own type so
// callers (and the CLI exit-code mapping) can discriminate without parsing
// messages.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input file; line is 1-based.
struct ParseError : Error {
  ParseError(const std::string& msg, std::size_t line_no)
      : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
  std::size_t line;
};

// A split, remain set, or group partition came out unusable.
struct DegenerateError : Error {
  using Error::Error;
};

// Training produced a non-finite loss; epoch is 0-based.
struct DivergenceError : Error {
  DivergenceError(const std::string& msg, std::size_t epoch_no)
      : Error(msg + " (epoch " + std::to_string(epoch_no) + ")"), epoch(epoch_no) {}
  std::size_t epoch;
};

// Conjugate gradient hit a non-finite intermediate; iteration is 0-based.
struct SolverError : Error {
  SolverError(const std::string& msg, std::size_t iter_no)
      : Error(msg + " (iteration " + std::to_string(iter_no) + ")"), iteration(iter_no) {}
  std::size_t iteration;
};

// Caches or id lists that must line up do not.
struct AlignmentError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic randomness. Draws are hand-rolled on top of mt19937_64: the
// stdlib distributions are implementation-defined, which would tie frozen
// test expectations to one libstdc++ version.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n) without modulo bias.
  std::uint64_t next_below(std::uint64_t n);

  // Standard normal via Box-Muller.
  double next_normal();

  // k distinct indices from [0, n), ascending.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Deterministic parallelism. Work is cut into fixed-size blocks that do not
// depend on the worker count; per-block results are combined in block order,
// so every reduction is bitwise identical at any --threads setting.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kParallelBlock = 256;

// Effective worker count: threads == 0 means hardware concurrency.
std::size_t resolve_threads(std::size_t threads);

// Runs body(block_index, begin, end) for every block of [0, n). Blocks are
// independent; the scheduler may run them on any worker in any order.
void parallel_blocks(std::size_t n, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

// Number of blocks covering n items.
inline std::size_t block_count(std::size_t n) {
  return (n + kParallelBlock - 1) / kParallelBlock;
}

// ---------------------------------------------------------------------------
// Formatting and hashing helpers shared by reports and checkpoints.
// ---------------------------------------------------------------------------

// Shortest round-trip decimal representation of a double ("%.17g" trimmed).
std::string format_double(double v);

// FNV-1a 64-bit over a byte buffer; stable across platforms.
std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string to_hex(std::uint64_t v);

}  // namespace debrec
