#pragma once

#include <stdexcept>
#include <vector>

#include "metalora/rng.hpp"

namespace metalora {

struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct generation_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct index_error : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Shared base matrix plus T+1 per-task low-rank perturbation factors.
// Index T (zero-based) is the held-out test task.
struct GroundTruth {
  Matrix a_star;                // d x d
  std::vector<Matrix> u_star;   // T+1 factors, each d x k
  int d = 0;
  int k = 0;
  int T = 0;

  // Builds directly from raw parts without the column-independence check.
  // Generated truths always satisfy it; deserialized or hand-built ones
  // (e.g. k(T+1) > d study instances) may not.
  static GroundTruth from_parts(Matrix a_star, std::vector<Matrix> u_star);
};

struct TaskDataset {
  Matrix x;  // d x n, columns are samples
  Matrix y;  // d x n
  int task_index = 0;  // 1-based; T+1 is the test task
  double sigma_eps = 0.0;
  double sigma_x = 1.0;

  int n() const { return static_cast<int>(x.cols()); }
};

// True iff the concatenation of all u_star columns has full numerical rank,
// i.e. smallest singular value > tol * largest.
bool check_task_diversity(const GroundTruth& gt, double tol = 1e-10);

// All entries i.i.d. standard normal; redraws (up to 100 attempts) until the
// diversity check passes. Requires k(T+1) <= d.
GroundTruth generate_ground_truth(int d, int k, int T, RngSpec rng);

// Plain gaussian draw with no diversity requirement. The landscape studies
// live in the overparametrized regime k(T+1) > d where the recovery
// assumptions cannot hold; only the recovery theorems need them.
GroundTruth sample_dense_truth(int d, int k, int T, RngSpec rng);

// Samples n points x_j ~ N(0, sigma_x^2 I); y_j = (A* + U_t U_t^T) x_j + eps_j
// with eps_j ~ N(0, sigma_eps^2 I). task_index is 1-based.
TaskDataset sample_task(const GroundTruth& gt, int task_index, int n,
                        double sigma_x, double sigma_eps, RngSpec rng);

// The task's true regression matrix A* + U_t U_t^T (1-based task_index).
Matrix task_matrix(const GroundTruth& gt, int task_index);

}  // namespace metalora
