#include "metalora/task_model.hpp"

#include <string>
#include <utility>

#include <Eigen/SVD>

namespace metalora {

GroundTruth GroundTruth::from_parts(Matrix a_star, std::vector<Matrix> u_star) {
  if (a_star.rows() != a_star.cols())
    throw dimension_error("a_star must be square");
  if (u_star.size() < 2)
    throw dimension_error("need at least one retraining task plus the test task");
  const int d = static_cast<int>(a_star.rows());
  const int k = static_cast<int>(u_star.front().cols());
  for (const Matrix& u : u_star) {
    if (u.rows() != d || u.cols() != k)
      throw dimension_error("all u_star factors must be d x k");
  }
  GroundTruth gt;
  gt.a_star = std::move(a_star);
  gt.u_star = std::move(u_star);
  gt.d = d;
  gt.k = k;
  gt.T = static_cast<int>(gt.u_star.size()) - 1;
  return gt;
}

bool check_task_diversity(const GroundTruth& gt, double tol) {
  const int cols = gt.k * (gt.T + 1);
  if (cols > gt.d) return false;
  Matrix stacked(gt.d, cols);
  for (int t = 0; t <= gt.T; ++t)
    stacked.block(0, t * gt.k, gt.d, gt.k) = gt.u_star[static_cast<size_t>(t)];
  Eigen::JacobiSVD<Matrix> svd(stacked);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return false;
  return sv(sv.size() - 1) > tol * sv(0);
}

GroundTruth generate_ground_truth(int d, int k, int T, RngSpec rng) {
  if (d < 1 || k < 1 || T < 1)
    throw dimension_error("d, k, T must all be positive");
  if (k * (T + 1) > d)
    throw dimension_error("k(T+1) = " + std::to_string(k * (T + 1)) +
                          " exceeds d = " + std::to_string(d) +
                          "; task factors cannot be jointly independent");
  Rng gen(rng);
  for (int attempt = 0; attempt < 100; ++attempt) {
    GroundTruth gt;
    gt.d = d;
    gt.k = k;
    gt.T = T;
    gt.a_star = gen.gaussian_matrix(d, d);
    gt.u_star.reserve(static_cast<size_t>(T) + 1);
    for (int t = 0; t <= T; ++t) gt.u_star.push_back(gen.gaussian_matrix(d, k));
    if (check_task_diversity(gt)) return gt;
  }
  throw generation_error("task diversity check failed after 100 attempts");
}

GroundTruth sample_dense_truth(int d, int k, int T, RngSpec rng) {
  if (d < 1 || k < 1 || T < 1)
    throw dimension_error("d, k, T must all be positive");
  Rng gen(rng);
  GroundTruth gt;
  gt.d = d;
  gt.k = k;
  gt.T = T;
  gt.a_star = gen.gaussian_matrix(d, d);
  gt.u_star.reserve(static_cast<size_t>(T) + 1);
  for (int t = 0; t <= T; ++t) gt.u_star.push_back(gen.gaussian_matrix(d, k));
  return gt;
}

Matrix task_matrix(const GroundTruth& gt, int task_index) {
  if (task_index < 1 || task_index > gt.T + 1)
    throw index_error("task_index " + std::to_string(task_index) +
                      " outside [1, " + std::to_string(gt.T + 1) + "]");
  const Matrix& u = gt.u_star[static_cast<size_t>(task_index - 1)];
  return gt.a_star + u * u.transpose();
}

TaskDataset sample_task(const GroundTruth& gt, int task_index, int n,
                        double sigma_x, double sigma_eps, RngSpec rng) {
  if (n < 1) throw dimension_error("need at least one sample");
  const Matrix m = task_matrix(gt, task_index);
  Rng gen(rng);
  TaskDataset data;
  data.task_index = task_index;
  data.sigma_x = sigma_x;
  data.sigma_eps = sigma_eps;
  data.x = sigma_x * gen.gaussian_matrix(gt.d, n);
  data.y = m * data.x;
  if (sigma_eps > 0.0) data.y += sigma_eps * gen.gaussian_matrix(gt.d, n);
  return data;
}

}  // namespace metalora
