#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace metalora {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Identifies one reproducible random stream. Identical (master_seed, stream_id)
// produce bit-identical draws on every platform: the generator is mt19937_64
// (standardized output sequence) and all distributions below are implemented
// by hand instead of through std:: distribution objects, whose output is
// implementation-defined.
struct RngSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;
};

// Derives a child stream id, so that per-trial/per-task substreams can be
// split off a master seed without overlapping.
std::uint64_t derive_stream(std::uint64_t parent_stream, std::uint64_t salt);

class Rng {
 public:
  explicit Rng(RngSpec spec);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();

  // Standard normal via Box-Muller (explicit formula, deterministic).
  double gaussian();

  // Fills column-major, entries i.i.d. N(0, 1).
  Matrix gaussian_matrix(int rows, int cols);

  Vector gaussian_vector(int n);

  // Uniform in the closed ball of the given radius.
  Vector ball(int dim, double radius);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace metalora
