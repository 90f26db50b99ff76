#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <vector>

#include "metalora/solvers.hpp"

using namespace metalora;

namespace {

int numerical_rank_of(const Matrix& m, double rel_tol = 1e-8) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * sv(0)) ++rank;
  return rank;
}

MetaParams exact_params(const GroundTruth& gt) {
  MetaParams p;
  p.a = gt.a_star;
  for (int t = 0; t < gt.T; ++t) p.u.push_back(gt.u_star[static_cast<size_t>(t)]);
  return p;
}

}  // namespace

TEST_CASE("solve_sr_population closed form") {
  const GroundTruth gt = generate_ground_truth(10, 1, 3, RngSpec{1, 0});
  Matrix expected = gt.a_star;
  for (int t = 0; t < gt.T; ++t) {
    const auto& us = gt.u_star[static_cast<size_t>(t)];
    expected += us * us.transpose() / gt.T;
  }
  CHECK((solve_sr_population(gt) - expected).norm() < 1e-13);

  // Zero adapters collapse to A*.
  std::vector<Matrix> zeros(4, Matrix::Zero(10, 1));
  const GroundTruth flat = GroundTruth::from_parts(gt.a_star, zeros);
  CHECK((solve_sr_population(flat) - gt.a_star).norm() == 0.0);
}

TEST_CASE("solve_sr_population rank law") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    for (int T = 1; T <= 4; ++T) {
      const GroundTruth gt = generate_ground_truth(10, 1, T, RngSpec{seed, 2});
      CHECK(numerical_rank_of(solve_sr_population(gt) - gt.a_star) == gt.k * T);
    }
  }
}

TEST_CASE("solve_sr_population matches a gradient-descent oracle") {
  const GroundTruth gt = generate_ground_truth(8, 1, 3, RngSpec{2, 0});
  // Independent GD on the pooled quadratic f(A) = (1/2) sum_t |M_t - A|^2.
  Matrix a = Matrix::Zero(8, 8);
  for (int it = 0; it < 4000; ++it) {
    Matrix grad = Matrix::Zero(8, 8);
    for (int t = 1; t <= gt.T; ++t) grad += a - task_matrix(gt, t);
    a -= 0.3 / gt.T * grad;
  }
  CHECK((solve_sr_population(gt) - a).norm() < 1e-8);
}

TEST_CASE("solve_sr_empirical exactly determined and ridge perturbation") {
  const GroundTruth gt = generate_ground_truth(6, 1, 1, RngSpec{3, 0});
  std::vector<TaskDataset> data{sample_task(gt, 1, 12, 1.0, 0.0, RngSpec{3, 1})};
  const Matrix a0 = solve_sr_empirical(data, 0.0);
  CHECK((a0 - task_matrix(gt, 1)).norm() < 1e-8);
  const Matrix a_ridge = solve_sr_empirical(data, 1e-6);
  CHECK((a_ridge - a0).norm() < 1e-4);
}

TEST_CASE("solve_sr_empirical approaches the population solution") {
  // The gap scales like the task-matrix spread times the Wishart fluctuation
  // d/sqrt(n); a moderate instance keeps it visibly below 1e-2 at n = 1e5.
  GroundTruth gt = generate_ground_truth(4, 1, 2, RngSpec{4, 0});
  for (Matrix& u : gt.u_star) u *= 0.5;
  std::vector<TaskDataset> data;
  for (int t = 1; t <= gt.T; ++t)
    data.push_back(sample_task(gt, t, 100000, 1.0, 0.0, RngSpec{4, static_cast<std::uint64_t>(t)}));
  const double gap = (solve_sr_empirical(data, 0.0) - solve_sr_population(gt)).norm();
  CHECK(gap < 1e-2);
}

TEST_CASE("solve_sr_empirical rejects singular normal equations") {
  const GroundTruth gt = generate_ground_truth(6, 1, 1, RngSpec{5, 0});
  // Three samples cannot span d=6.
  std::vector<TaskDataset> data{sample_task(gt, 1, 3, 1.0, 0.0, RngSpec{5, 1})};
  CHECK_THROWS_AS(solve_sr_empirical(data, 0.0), solver_error);
}

TEST_CASE("train_meta_gd converges instantly at the ground truth") {
  const GroundTruth gt = generate_ground_truth(8, 1, 3, RngSpec{6, 0});
  TrainConfig cfg;
  const TrainTrace trace = train_meta_gd(exact_params(gt), population_objective(gt), cfg, RngSpec{6, 1});
  CHECK(trace.converged);
  CHECK(trace.iterations_used <= 1);
  CHECK(meta_loss_population(trace.final_params, gt) < 1e-12);
}

TEST_CASE("descent is monotone even with an oversized step") {
  const GroundTruth gt = generate_ground_truth(6, 1, 2, RngSpec{7, 0});
  Rng gen(RngSpec{7, 1});
  const MetaParams init = random_init(6, 1, 2, 0.5, gen);
  TrainConfig cfg;
  cfg.learning_rate = 5.0;  // halving safeguard must absorb this
  cfg.max_iters = 400;
  const TrainTrace trace = train_meta_gd(init, population_objective(gt), cfg, RngSpec{7, 2});
  CHECK_FALSE(trace.diverged);
  REQUIRE(trace.loss_history.size() > 2);
  CHECK(std::is_sorted(trace.loss_history.rbegin(), trace.loss_history.rend()));
}

TEST_CASE("population recovery at the default dimensions") {
  int converged = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const GroundTruth gt = generate_ground_truth(10, 1, 3, RngSpec{seed, 10});
    Rng gen(RngSpec{seed, 11});
    const MetaParams init = random_init(10, 1, 3, 0.01, gen);
    TrainConfig cfg;
    cfg.max_iters = 30000;
    const TrainTrace trace = train_meta_gd(init, population_objective(gt), cfg, RngSpec{seed, 12});
    const double loss = meta_loss_population(trace.final_params, gt);
    if (loss < 1e-8) {
      ++converged;
      CHECK((trace.final_params.a - gt.a_star).norm() < 1e-3);
      for (int t = 0; t < gt.T; ++t) {
        const auto& u = trace.final_params.u[static_cast<size_t>(t)];
        const auto& us = gt.u_star[static_cast<size_t>(t)];
        CHECK((u * u.transpose() - us * us.transpose()).norm() < 1e-3);
      }
    }
  }
  CHECK(converged >= 2);
}

TEST_CASE("perturbed GD escapes every T=2 run") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const GroundTruth gt = generate_ground_truth(6, 1, 2, RngSpec{seed, 20});
    Rng gen(RngSpec{seed, 21});
    const MetaParams init = random_init(6, 1, 2, 0.01, gen);
    TrainConfig cfg;
    cfg.max_iters = 60000;
    cfg.perturbation_radius = 0.05;
    cfg.grad_tol = 1e-9;
    const TrainTrace trace = train_meta_gd(init, population_objective(gt), cfg, RngSpec{seed, 22});
    CHECK(meta_loss_population(trace.final_params, gt) < 1e-6);
  }
}

TEST_CASE("trace histories align with the iteration count") {
  const GroundTruth gt = generate_ground_truth(6, 1, 2, RngSpec{8, 0});
  Rng gen(RngSpec{8, 1});
  const MetaParams init = random_init(6, 1, 2, 0.1, gen);
  TrainConfig cfg;
  cfg.max_iters = 50;
  const TrainTrace trace = train_meta_gd(init, population_objective(gt), cfg, RngSpec{8, 2});
  CHECK(trace.loss_history.size() == trace.grad_norm_history.size());
  CHECK(static_cast<int>(trace.loss_history.size()) >= trace.iterations_used);
}

TEST_CASE("finetune_population recovers exact and rank-limited losses") {
  const GroundTruth gt = generate_ground_truth(10, 1, 3, RngSpec{9, 0});
  const Matrix exact = task_matrix(gt, gt.T + 1);
  for (int r : {1, 3}) {
    auto [adapter, loss] = finetune_population(exact, gt, r);
    CHECK(loss < 1e-18);
    CHECK(adapter.rank == r);
  }
  const Matrix a_sr = solve_sr_population(gt);
  auto [low, loss_low] = finetune_population(a_sr, gt, gt.k * gt.T);
  CHECK(loss_low > 1e-4);
  auto [high, loss_high] = finetune_population(a_sr, gt, gt.k * (gt.T + 1));
  CHECK(loss_high <= 1e-16);
  // Recovery case: base at A* needs only rank k.
  auto [rec, loss_rec] = finetune_population(gt.a_star, gt, gt.k);
  CHECK(loss_rec <= 1e-16);
}

TEST_CASE("finetune_population loss equals the SVD tail") {
  const GroundTruth gt = generate_ground_truth(8, 2, 2, RngSpec{10, 0});
  Rng gen(RngSpec{10, 1});
  const Matrix a_hat = gen.gaussian_matrix(8, 8);
  const Matrix residual = task_matrix(gt, gt.T + 1) - a_hat;
  Eigen::JacobiSVD<Matrix> svd(residual);
  const auto& sv = svd.singularValues();
  for (int r = 1; r <= 8; ++r) {
    auto [adapter, loss] = finetune_population(a_hat, gt, r);
    double tail = 0.0;
    for (int i = r; i < sv.size(); ++i) tail += 0.5 * sv(i) * sv(i);
    CHECK(loss == doctest::Approx(tail).epsilon(1e-10));
  }
}

TEST_CASE("finetune_empirical fits noiseless data at the exact base") {
  const GroundTruth gt = generate_ground_truth(8, 1, 2, RngSpec{11, 0});
  const TaskDataset test_data = sample_task(gt, gt.T + 1, 200, 1.0, 0.0, RngSpec{11, 1});
  TrainConfig cfg;
  cfg.grad_tol = 1e-12;
  auto [adapter, trace] = finetune_empirical(gt.a_star, test_data, gt.k, cfg, RngSpec{11, 2});
  CHECK(task_loss_empirical(trace.final_params.a, test_data) < 1e-10);
  // The trace's fitted matrix is the frozen base plus the adapter product.
  CHECK((trace.final_params.a - (gt.a_star + adapter.u * adapter.v.transpose())).norm() < 1e-12);
}

TEST_CASE("finetune_empirical cannot beat the population optimum") {
  const GroundTruth gt = generate_ground_truth(10, 1, 3, RngSpec{12, 0});
  const Matrix a_sr = solve_sr_population(gt);
  const TaskDataset test_data = sample_task(gt, gt.T + 1, 100, 1.0, 0.1, RngSpec{12, 1});
  TrainConfig cfg;
  cfg.grad_tol = 1e-8;
  cfg.max_iters = 20000;
  const int rank = gt.k;
  auto [adapter, trace] = finetune_empirical(a_sr, test_data, rank, cfg, RngSpec{12, 2});
  auto [best, best_loss] = finetune_population(a_sr, gt, rank);
  CHECK(test_loss_population(adapter, a_sr, gt) >= best_loss - 1e-12);
}

TEST_CASE("finetuning on noisy samples hits a noise floor the clean run avoids") {
  const GroundTruth gt = generate_ground_truth(10, 1, 3, RngSpec{13, 0});
  TrainConfig cfg;
  cfg.grad_tol = 1e-10;
  cfg.max_iters = 30000;
  const TaskDataset noisy = sample_task(gt, gt.T + 1, 100, 1.0, 0.1, RngSpec{13, 1});
  auto [noisy_adapter, noisy_trace] = finetune_empirical(gt.a_star, noisy, gt.k, cfg, RngSpec{13, 2});
  const TaskDataset clean = sample_task(gt, gt.T + 1, 100, 1.0, 0.0, RngSpec{13, 1});
  auto [clean_adapter, clean_trace] = finetune_empirical(gt.a_star, clean, gt.k, cfg, RngSpec{13, 2});
  const double noisy_pop = test_loss_population(noisy_adapter, gt.a_star, gt);
  const double clean_pop = test_loss_population(clean_adapter, gt.a_star, gt);
  CHECK(clean_pop < 1e-8);
  CHECK(noisy_pop > 1e-5);
}

TEST_CASE("best_rank_approx basics") {
  Rng gen(RngSpec{14, 0});
  const Vector a = gen.gaussian_vector(6);
  const Vector b = gen.gaussian_vector(6);
  const Matrix rank1 = a * b.transpose();
  auto [ad1, err1] = best_rank_approx(rank1, 1);
  CHECK(err1 < 1e-20);
  CHECK((ad1.u * ad1.v.transpose() - rank1).norm() < 1e-10);

  auto [ad2, err2] = best_rank_approx(Matrix::Identity(4, 4), 2);
  CHECK(err2 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("best_rank_approx beats a random-search probe") {
  Rng gen(RngSpec{15, 0});
  const Matrix m = gen.gaussian_matrix(6, 6);
  auto [adapter, err] = best_rank_approx(m, 3);
  const double scale = m.norm();
  for (int trial = 0; trial < 1000; ++trial) {
    const Matrix u = gen.gaussian_matrix(6, 3) * (0.3 * scale);
    const Matrix v = gen.gaussian_matrix(6, 3);
    const double cand = 0.5 * (m - u * v.transpose()).squaredNorm();
    CHECK(cand >= err - 1e-12);
  }
}

TEST_CASE("best_rank_approx split is deterministic and consistent") {
  Rng gen(RngSpec{16, 0});
  const Matrix m = gen.gaussian_matrix(5, 5);
  auto [a1, e1] = best_rank_approx(m, 2);
  auto [a2, e2] = best_rank_approx(m, 2);
  CHECK((a1.u - a2.u).norm() == 0.0);
  CHECK((a1.v - a2.v).norm() == 0.0);
  CHECK(e1 == e2);
  CHECK(0.5 * (m - a1.u * a1.v.transpose()).squaredNorm() == doctest::Approx(e1).epsilon(1e-10));
}
