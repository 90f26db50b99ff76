#pragma once

#include <vector>

#include "metalora/task_model.hpp"

namespace metalora {

struct Adapter;  // defined in solvers.hpp

// Learner state: base matrix A plus one symmetric-adapter factor per
// retraining task.
struct MetaParams {
  Matrix a;               // d x d
  std::vector<Matrix> u;  // T factors, each d x k

  int d() const { return static_cast<int>(a.rows()); }
  int k() const { return u.empty() ? 0 : static_cast<int>(u.front().cols()); }
  int T() const { return static_cast<int>(u.size()); }
};

struct MetaGradient {
  Matrix grad_a;
  std::vector<Matrix> grad_u;
};

// i.i.d. N(0, init_scale^2) entries for A offset from zero and every U_t.
MetaParams random_init(int d, int k, int T, double init_scale, Rng& gen);

// Flattened order [vec(A); vec(U_1); ...; vec(U_T)], column-major vecs.
Vector flatten(const MetaParams& p);
Vector flatten(const MetaGradient& g);
MetaParams unflatten(const Vector& v, int d, int k, int T);

double task_loss_population(const Matrix& a_t, const GroundTruth& gt, int t);

double task_loss_empirical(const Matrix& a_t, const TaskDataset& data);

// (1/2) sum_t || A* + U_t* U_t*^T - A - U_t U_t^T ||_F^2 over retraining tasks.
double meta_loss_population(const MetaParams& p, const GroundTruth& gt);

double meta_loss_empirical(const MetaParams& p,
                           const std::vector<TaskDataset>& data);

// (1/2) || A* + U_{T+1}* U_{T+1}*^T - a_hat - U V^T ||_F^2.
double test_loss_population(const Adapter& adapter, const Matrix& a_hat,
                            const GroundTruth& gt);

// Exact derivatives of meta_loss_population:
//   grad_a    = T (A - A*) + sum_t (U_t U_t^T - U_t* U_t*^T)
//   grad_u[t] = (R_t + R_t^T) U_t,  R_t = A - A* + U_t U_t^T - U_t* U_t*^T
// The unsymmetrized form 2 R_t U_t agrees only where grad_a = 0, so the
// symmetrized product is required for finite-difference agreement at
// arbitrary points.
MetaGradient meta_grad_population(const MetaParams& p, const GroundTruth& gt);

MetaGradient meta_grad_empirical(const MetaParams& p,
                                 const std::vector<TaskDataset>& data);

// Per-task sufficient statistics of the empirical objective. Loss and
// gradient evaluations through these cost O(d^3) independent of sample count,
// which is what makes long empirical GD runs cheap.
struct TaskStats {
  Matrix cxx;   // X X^T
  Matrix cyx;   // Y X^T
  double cyy = 0.0;  // ||Y||_F^2
  int n = 0;

  static TaskStats from_dataset(const TaskDataset& data);

  // (1/2n) || Y - M X ||_F^2 for the given task matrix M.
  double loss(const Matrix& m) const;

  // d/dM of the above: (1/n) (M cxx - cyx).
  Matrix grad(const Matrix& m) const;
};

struct MetaEmpiricalStats {
  std::vector<TaskStats> tasks;

  static MetaEmpiricalStats from_datasets(const std::vector<TaskDataset>& data);

  double loss(const MetaParams& p) const;
  MetaGradient grad(const MetaParams& p) const;
};

}  // namespace metalora
