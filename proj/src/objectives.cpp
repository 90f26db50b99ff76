#include "metalora/objectives.hpp"

#include <string>

#include "metalora/solvers.hpp"

namespace metalora {
namespace {

void require_shapes(const MetaParams& p, const GroundTruth& gt) {
  if (p.d() != gt.d || p.T() != gt.T || p.k() != gt.k)
    throw dimension_error("parameter shapes do not match the ground truth");
}

void require_task_count(const MetaParams& p, const std::vector<TaskDataset>& data) {
  if (static_cast<int>(data.size()) != p.T())
    throw dimension_error("need exactly one dataset per retraining task, got " +
                          std::to_string(data.size()));
}

}  // namespace

MetaParams random_init(int d, int k, int T, double init_scale, Rng& gen) {
  MetaParams p;
  p.a = init_scale * gen.gaussian_matrix(d, d);
  p.u.reserve(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) p.u.push_back(init_scale * gen.gaussian_matrix(d, k));
  return p;
}

Vector flatten(const MetaParams& p) {
  const int d = p.d(), k = p.k(), T = p.T();
  Vector v(d * d + T * d * k);
  v.head(d * d) = Eigen::Map<const Vector>(p.a.data(), d * d);
  for (int t = 0; t < T; ++t)
    v.segment(d * d + t * d * k, d * k) =
        Eigen::Map<const Vector>(p.u[static_cast<size_t>(t)].data(), d * k);
  return v;
}

Vector flatten(const MetaGradient& g) {
  MetaParams view;
  view.a = g.grad_a;
  view.u = g.grad_u;
  return flatten(view);
}

MetaParams unflatten(const Vector& v, int d, int k, int T) {
  if (v.size() != d * d + T * d * k)
    throw dimension_error("flattened vector has wrong length");
  MetaParams p;
  p.a = Eigen::Map<const Matrix>(v.data(), d, d);
  p.u.reserve(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t)
    p.u.emplace_back(Eigen::Map<const Matrix>(v.data() + d * d + t * d * k, d, k));
  return p;
}

double task_loss_population(const Matrix& a_t, const GroundTruth& gt, int t) {
  const Matrix residual = task_matrix(gt, t) - a_t;
  return 0.5 * residual.squaredNorm();
}

double task_loss_empirical(const Matrix& a_t, const TaskDataset& data) {
  if (data.n() < 1) throw dimension_error("empty dataset");
  return (data.y - a_t * data.x).squaredNorm() / (2.0 * data.n());
}

double meta_loss_population(const MetaParams& p, const GroundTruth& gt) {
  require_shapes(p, gt);
  double loss = 0.0;
  for (int t = 0; t < gt.T; ++t) {
    const Matrix& u = p.u[static_cast<size_t>(t)];
    const Matrix residual = task_matrix(gt, t + 1) - p.a - u * u.transpose();
    loss += 0.5 * residual.squaredNorm();
  }
  return loss;
}

double meta_loss_empirical(const MetaParams& p,
                           const std::vector<TaskDataset>& data) {
  require_task_count(p, data);
  double loss = 0.0;
  for (int t = 0; t < p.T(); ++t) {
    const Matrix& u = p.u[static_cast<size_t>(t)];
    loss += task_loss_empirical(p.a + u * u.transpose(), data[static_cast<size_t>(t)]);
  }
  return loss;
}

double test_loss_population(const Adapter& adapter, const Matrix& a_hat,
                            const GroundTruth& gt) {
  if (adapter.u.rows() != gt.d || adapter.v.rows() != gt.d ||
      adapter.u.cols() != adapter.v.cols())
    throw dimension_error("adapter factors must be d x r");
  const Matrix fitted = a_hat + adapter.u * adapter.v.transpose();
  return task_loss_population(fitted, gt, gt.T + 1);
}

MetaGradient meta_grad_population(const MetaParams& p, const GroundTruth& gt) {
  require_shapes(p, gt);
  MetaGradient g;
  g.grad_a = Matrix::Zero(gt.d, gt.d);
  g.grad_u.reserve(static_cast<size_t>(gt.T));
  for (int t = 0; t < gt.T; ++t) {
    const Matrix& u = p.u[static_cast<size_t>(t)];
    const Matrix& us = gt.u_star[static_cast<size_t>(t)];
    const Matrix r = p.a - gt.a_star + u * u.transpose() - us * us.transpose();
    g.grad_a += r;
    g.grad_u.push_back((r + r.transpose()) * u);
  }
  return g;
}

MetaGradient meta_grad_empirical(const MetaParams& p,
                                 const std::vector<TaskDataset>& data) {
  require_task_count(p, data);
  return MetaEmpiricalStats::from_datasets(data).grad(p);
}

TaskStats TaskStats::from_dataset(const TaskDataset& data) {
  if (data.n() < 1) throw dimension_error("empty dataset");
  TaskStats s;
  s.cxx = data.x * data.x.transpose();
  s.cyx = data.y * data.x.transpose();
  s.cyy = data.y.squaredNorm();
  s.n = data.n();
  return s;
}

double TaskStats::loss(const Matrix& m) const {
  const double quad = (m * cxx).cwiseProduct(m).sum();
  const double cross = cyx.cwiseProduct(m).sum();
  return (cyy - 2.0 * cross + quad) / (2.0 * n);
}

Matrix TaskStats::grad(const Matrix& m) const {
  return (m * cxx - cyx) / static_cast<double>(n);
}

MetaEmpiricalStats MetaEmpiricalStats::from_datasets(
    const std::vector<TaskDataset>& data) {
  MetaEmpiricalStats s;
  s.tasks.reserve(data.size());
  for (const TaskDataset& d : data) s.tasks.push_back(TaskStats::from_dataset(d));
  return s;
}

double MetaEmpiricalStats::loss(const MetaParams& p) const {
  if (static_cast<int>(tasks.size()) != p.T())
    throw dimension_error("task count mismatch");
  double loss = 0.0;
  for (int t = 0; t < p.T(); ++t) {
    const Matrix& u = p.u[static_cast<size_t>(t)];
    loss += tasks[static_cast<size_t>(t)].loss(p.a + u * u.transpose());
  }
  return loss;
}

MetaGradient MetaEmpiricalStats::grad(const MetaParams& p) const {
  if (static_cast<int>(tasks.size()) != p.T())
    throw dimension_error("task count mismatch");
  MetaGradient g;
  g.grad_a = Matrix::Zero(p.d(), p.d());
  g.grad_u.reserve(tasks.size());
  for (int t = 0; t < p.T(); ++t) {
    const Matrix& u = p.u[static_cast<size_t>(t)];
    const Matrix gm = tasks[static_cast<size_t>(t)].grad(p.a + u * u.transpose());
    g.grad_a += gm;
    g.grad_u.push_back((gm + gm.transpose()) * u);
  }
  return g;
}

}  // namespace metalora
