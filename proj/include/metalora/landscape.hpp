#pragma once

#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "metalora/objectives.hpp"
#include "metalora/solvers.hpp"
#include "metalora/task_model.hpp"

namespace metalora {

struct precondition_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct infeasible_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Classification {
  GlobalMinimum,
  StrictSaddle,
  CandidateLocalMinimum,
  NotStationary,
};

const char* to_string(Classification c);

struct StationaryReport {
  double grad_norm = 0.0;
  // NaN when the dense Hessian was not computed (non-stationary input or
  // problem too large for the dense guard).
  double min_hessian_eig = 0.0;
  Classification classification = Classification::NotStationary;
  std::optional<Vector> curvature_direction;  // flattened over (A, U_1..U_T), unit norm
  double loss_value = 0.0;
  std::vector<double> b_norms;
};

enum class NetMode { FullNet, MonteCarlo };

const char* to_string(NetMode m);

struct NetCertificate {
  std::vector<Matrix> center;
  double delta = 0.0;
  double epsilon = 0.0;
  double gamma = 0.0;
  double min_r_value = 0.0;
  long long points_checked = 0;
  NetMode mode = NetMode::FullNet;
  bool certified = false;
};

// B_t = U_tU_t' - U_t*U_t*' - (1/T) sum_s (U_sU_s' - U_s*U_s*'); sum_t B_t = 0.
std::vector<Matrix> compute_b_matrices(const std::vector<Matrix>& u, const GroundTruth& gt);

// Dense Hessian of the population meta loss in the flattened order
// [vec(A); vec(U_1); ...; vec(U_T)] (column-major vec). Guarded: throws
// dimension_error when d^2 + Tdk exceeds 5000.
Matrix hessian_meta(const MetaParams& p, const GroundTruth& gt);

// Matrix-free Hessian-vector product; same flattening, no size guard.
Vector hessian_meta_vec(const MetaParams& p, const GroundTruth& gt, const Vector& v);

// Schur complement of the A-block: Q = H_UU - (1/T) C'C with C the A-U cross
// block. Q (order Tdk) is PSD iff the full Hessian is.
Matrix schur_complement_q(const MetaParams& p, const GroundTruth& gt);

// g(alpha; z) = |U1 a1 + U2 a2|^2 + lambda (|a1|^2 - |a2|^2) for the T=2
// curvature analysis. alpha stacks (a1, a2), each of length k. Requires z to
// be unit and to lie in ker(U2 U2' - U1 U1') of the supplied pair; the lambda
// passed must be z's eigenvalue under U2*U2*' - U1*U1*', which cannot be
// checked here and is the caller's contract.
double g_quadratic_form(const Vector& alpha, const Vector& z, const Matrix& u_hat_1,
                        const Matrix& u_hat_2, double lambda);

// At a T=2 first-order stationary point with positive loss, constructs a
// descent direction with negative Hessian Rayleigh quotient from the shared
// eigenbasis of the task difference matrices. Returns the flattened (A, U)
// direction, or nullopt when the point is not numerically stationary, has
// (near) zero loss, or no verified direction emerges.
std::optional<Vector> find_negative_curvature_t2(const MetaParams& p, const GroundTruth& gt,
                                                 double tol);

// Order of checks: NotStationary (grad_norm >= grad_tol), GlobalMinimum
// (loss < grad_tol), StrictSaddle (min eig < -eig_tol; direction attached,
// analytic T=2 construction preferred over the dense eigenvector), else
// CandidateLocalMinimum. The saddle/candidate branches need the dense
// Hessian and inherit its size guard.
StationaryReport classify_stationary_point(const MetaParams& p, const GroundTruth& gt,
                                           double grad_tol, double eig_tol);

// Lhat(U) = sum_t |B_t|_F^2 (no 1/2) and its gradient 4 B_t U_t.
std::pair<double, std::vector<Matrix>> reduced_loss_and_grad(const std::vector<Matrix>& u,
                                                             const GroundTruth& gt);

// Central finite-difference Hessian of Lhat, symmetrized.
Matrix reduced_hessian_fd(const std::vector<Matrix>& u, const GroundTruth& gt, double h = 1e-5);

// A = A* - (1/T) sum_t (U_tU_t' - U_t*U_t*'), the minimizer of the meta loss
// over A at fixed U.
MetaParams lift_with_critical_a(const std::vector<Matrix>& u, const GroundTruth& gt);

// Multi-start Levenberg-Marquardt on grad Lhat = 0. Returns the first point
// with grad norm < 1e-8, Lhat > 1e-4 and finite-difference reduced Hessian
// min eig > 1e-8, or nullopt. search_cfg.multistarts inits are drawn at scale
// search_cfg.init_scale times a log-uniform factor in [0.1, 10^0.5).
std::optional<std::pair<std::vector<Matrix>, StationaryReport>> probe_spurious_minimum(
    const GroundTruth& gt, const TrainConfig& search_cfg, RngSpec rng);

// Evaluates r(U) = vec(U - u_hat)' vec(grad Lhat(U)) over the delta-sphere
// around u_hat. FullNet builds a deterministic net with resolution <= epsilon
// (feasible only for Tdk <= 8 and within max_points); MonteCarlo samples
// max_points sphere points as evidence and never certifies. Restricted to
// k = 1, where the only factor symmetry is the sign flip and stays outside
// any small ball.
NetCertificate certify_local_min(const std::vector<Matrix>& u_hat, const GroundTruth& gt,
                                 double delta, double epsilon, double gamma,
                                 long long max_points, NetMode mode = NetMode::FullNet);

}  // namespace metalora
