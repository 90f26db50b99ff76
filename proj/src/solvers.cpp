#include "metalora/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/SVD>

namespace metalora {
namespace {

double gradient_norm(const MetaGradient& g) {
  double sq = g.grad_a.squaredNorm();
  for (const Matrix& gu : g.grad_u) sq += gu.squaredNorm();
  return std::sqrt(sq);
}

}  // namespace

MetaObjective population_objective(GroundTruth gt) {
  auto shared = std::make_shared<const GroundTruth>(std::move(gt));
  MetaObjective obj;
  obj.loss = [shared](const MetaParams& p) { return meta_loss_population(p, *shared); };
  obj.grad = [shared](const MetaParams& p) { return meta_grad_population(p, *shared); };
  return obj;
}

MetaObjective empirical_objective(MetaEmpiricalStats stats) {
  auto shared = std::make_shared<const MetaEmpiricalStats>(std::move(stats));
  MetaObjective obj;
  obj.loss = [shared](const MetaParams& p) { return shared->loss(p); };
  obj.grad = [shared](const MetaParams& p) { return shared->grad(p); };
  return obj;
}

Matrix solve_sr_population(const GroundTruth& gt) {
  Matrix sum = Matrix::Zero(gt.d, gt.d);
  for (int t = 0; t < gt.T; ++t) {
    const Matrix& u = gt.u_star[static_cast<size_t>(t)];
    sum += u * u.transpose();
  }
  return gt.a_star + sum / static_cast<double>(gt.T);
}

Matrix solve_sr_empirical(const std::vector<TaskDataset>& data, double ridge) {
  if (data.empty()) throw dimension_error("no datasets");
  const int d = static_cast<int>(data.front().x.rows());
  Matrix sxx = Matrix::Zero(d, d);
  Matrix syx = Matrix::Zero(d, d);
  for (const TaskDataset& task : data) {
    sxx += task.x * task.x.transpose();
    syx += task.y * task.x.transpose();
  }
  sxx += ridge * Matrix::Identity(d, d);
  Eigen::FullPivLU<Matrix> lu(sxx);
  if (!lu.isInvertible())
    throw solver_error("pooled normal equations are singular; use ridge > 0");
  return lu.solve(syx.transpose()).transpose();
}

TrainTrace train_meta_gd(const MetaParams& init, const MetaObjective& objective,
                         const TrainConfig& cfg, RngSpec rng) {
  Rng gen(rng);
  const int d = init.d(), k = init.k(), T = init.T();
  MetaParams p = init;
  TrainTrace trace;
  double loss = objective.loss(p);
  const double diverge_cap = 1e6 * (loss + 1.0);
  double window_start = loss;
  int window_count = 0;
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    const MetaGradient g = objective.grad(p);
    const double gn = gradient_norm(g);
    trace.loss_history.push_back(loss);
    trace.grad_norm_history.push_back(gn);
    if (loss > diverge_cap) {
      trace.diverged = true;
      break;
    }
    const bool near_stationary = gn < cfg.grad_tol;
    const bool escape_mode = cfg.perturbation_radius > 0.0 && loss > 10.0 * cfg.grad_tol;
    if (near_stationary && !escape_mode) {
      trace.converged = true;
      break;
    }
    ++window_count;
    bool stalled = false;
    if (window_count >= cfg.stall_window) {
      stalled = (window_start - loss) < kStallRelImprovement * std::max(1.0, loss);
      window_start = loss;
      window_count = 0;
    }
    bool moved = false;
    MetaParams cand;
    double cand_loss = 0.0;
    if (!(near_stationary || stalled) || !escape_mode) {
      double step = cfg.learning_rate;
      for (int h = 0; h < 60; ++h) {
        cand = p;
        cand.a -= step * g.grad_a;
        for (int t = 0; t < T; ++t) cand.u[static_cast<size_t>(t)] -= step * g.grad_u[static_cast<size_t>(t)];
        cand_loss = objective.loss(cand);
        if (cand_loss <= loss) {
          moved = true;
          break;
        }
        step *= 0.5;
      }
    }
    if (moved) {
      p = std::move(cand);
      loss = cand_loss;
      continue;
    }
    if (escape_mode) {
      Vector v = flatten(p);
      v += gen.ball(static_cast<int>(v.size()), cfg.perturbation_radius);
      p = unflatten(v, d, k, T);
      loss = objective.loss(p);
      ++trace.perturbations;
      window_start = loss;
      window_count = 0;
      continue;
    }
    break;  // no descent possible at any step size and escape disabled
  }
  if (it == cfg.max_iters) {
    const double gn = gradient_norm(objective.grad(p));
    trace.loss_history.push_back(loss);
    trace.grad_norm_history.push_back(gn);
    if (gn < cfg.grad_tol) trace.converged = true;
  }
  trace.iterations_used = it;
  trace.final_params = std::move(p);
  return trace;
}

std::pair<Adapter, double> best_rank_approx(const Matrix& m, int rank) {
  const int d = static_cast<int>(std::min(m.rows(), m.cols()));
  if (rank < 1 || rank > d) throw dimension_error("rank outside [1, d]");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  Adapter adapter;
  adapter.rank = rank;
  adapter.u = Matrix::Zero(m.rows(), rank);
  adapter.v = Matrix::Zero(m.cols(), rank);
  for (int i = 0; i < rank; ++i) {
    const double root = std::sqrt(sv(i));
    adapter.u.col(i) = svd.matrixU().col(i) * root;
    adapter.v.col(i) = svd.matrixV().col(i) * root;
  }
  double tail = 0.0;
  for (int i = rank; i < sv.size(); ++i) tail += sv(i) * sv(i);
  return {std::move(adapter), 0.5 * tail};
}

std::pair<Adapter, double> finetune_population(const Matrix& a_hat,
                                               const GroundTruth& gt, int rank) {
  const Matrix residual = task_matrix(gt, gt.T + 1) - a_hat;
  return best_rank_approx(residual, rank);
}

std::pair<Adapter, TrainTrace> finetune_empirical(const Matrix& a_hat,
                                                  const TaskDataset& data,
                                                  int rank,
                                                  const TrainConfig& cfg,
                                                  RngSpec rng) {
  if (rank < 1) throw dimension_error("rank must be positive");
  const int d = static_cast<int>(a_hat.rows());
  const TaskStats stats = TaskStats::from_dataset(data);
  Rng gen(rng);
  Matrix u = cfg.init_scale * gen.gaussian_matrix(d, rank);
  Matrix v = cfg.init_scale * gen.gaussian_matrix(d, rank);
  TrainTrace trace;
  double loss = stats.loss(a_hat + u * v.transpose());
  const double diverge_cap = 1e6 * (loss + 1.0);
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    const Matrix g = stats.grad(a_hat + u * v.transpose());
    const Matrix gu = g * v;
    const Matrix gv = g.transpose() * u;
    const double gn = std::sqrt(gu.squaredNorm() + gv.squaredNorm());
    trace.loss_history.push_back(loss);
    trace.grad_norm_history.push_back(gn);
    if (loss > diverge_cap) {
      trace.diverged = true;
      break;
    }
    if (gn < cfg.grad_tol) {
      trace.converged = true;
      break;
    }
    double step = cfg.learning_rate;
    bool moved = false;
    Matrix cu, cv;
    double cand_loss = 0.0;
    for (int h = 0; h < 60; ++h) {
      cu = u - step * gu;
      cv = v - step * gv;
      cand_loss = stats.loss(a_hat + cu * cv.transpose());
      if (cand_loss <= loss) {
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
    u = std::move(cu);
    v = std::move(cv);
    loss = cand_loss;
  }
  if (it == cfg.max_iters) {
    const Matrix g = stats.grad(a_hat + u * v.transpose());
    trace.loss_history.push_back(loss);
    const double gn = std::sqrt((g * v).squaredNorm() + (g.transpose() * u).squaredNorm());
    trace.grad_norm_history.push_back(gn);
    if (gn < cfg.grad_tol) trace.converged = true;
  }
  trace.iterations_used = it;
  trace.final_params.a = a_hat + u * v.transpose();
  Adapter adapter;
  adapter.u = std::move(u);
  adapter.v = std::move(v);
  adapter.rank = rank;
  return {std::move(adapter), std::move(trace)};
}

}  // namespace metalora
