#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "metalora/objectives.hpp"

namespace metalora {

struct solver_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Asymmetric rank-r adapter pair, applied as U V^T at fine-tuning time.
struct Adapter {
  Matrix u;  // d x r
  Matrix v;  // d x r
  int rank = 0;
};

struct TrainConfig {
  double learning_rate = 0.05;
  int max_iters = 100000;
  double grad_tol = 1e-9;
  double init_scale = 0.01;
  double perturbation_radius = 0.0;  // 0 disables perturbed GD
  int stall_window = 200;
  int multistarts = 200;  // used by multi-start searches, not by train_meta_gd
};

// Progress stalls when the loss improves by less than this relative amount
// over one stall window.
inline constexpr double kStallRelImprovement = 1e-8;

struct TrainTrace {
  std::vector<double> loss_history;
  std::vector<double> grad_norm_history;
  MetaParams final_params;
  bool converged = false;
  int iterations_used = 0;
  bool diverged = false;
  int perturbations = 0;
};

// Loss/gradient handle so the same descent loop serves the population and
// empirical objectives.
struct MetaObjective {
  std::function<double(const MetaParams&)> loss;
  std::function<MetaGradient(const MetaParams&)> grad;
};

MetaObjective population_objective(GroundTruth gt);
MetaObjective empirical_objective(MetaEmpiricalStats stats);

// A* + (1/T) sum_t U_t* U_t*^T, the closed-form pooled-objective minimizer.
Matrix solve_sr_population(const GroundTruth& gt);

// Exact least squares on the pooled samples:
// A = (sum_t Y_t X_t^T)(sum_t X_t X_t^T + ridge I)^{-1}.
Matrix solve_sr_empirical(const std::vector<TaskDataset>& data, double ridge);

// Full-batch gradient descent on (A, U_1..U_T) with a step-halving safeguard
// (loss never increases on a descent step). Stops at grad norm < grad_tol or
// max_iters. With perturbation_radius > 0, a stall or near-stationarity at
// loss > 10 * grad_tol triggers a uniform random ball perturbation instead of
// termination.
TrainTrace train_meta_gd(const MetaParams& init, const MetaObjective& objective,
                         const TrainConfig& cfg, RngSpec rng);

// Best rank-r fit of the residual A* + U_{T+1}* U_{T+1}*^T - a_hat via
// truncated SVD; returns the adapter and the attained population test loss
// (half the squared singular-value tail).
std::pair<Adapter, double> finetune_population(const Matrix& a_hat,
                                               const GroundTruth& gt, int rank);

// Gradient descent on (U, V) of the empirical test-task loss with a_hat
// frozen. trace.final_params.a holds the fitted matrix a_hat + U V^T.
std::pair<Adapter, TrainTrace> finetune_empirical(const Matrix& a_hat,
                                                  const TaskDataset& data,
                                                  int rank,
                                                  const TrainConfig& cfg,
                                                  RngSpec rng);

// Truncated SVD of m with the sqrt(sigma) split between factors; returns the
// adapter and (1/2) sum_{i>r} sigma_i^2.
std::pair<Adapter, double> best_rank_approx(const Matrix& m, int rank);

}  // namespace metalora
