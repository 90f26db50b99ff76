#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/SVD>
#include <cmath>

#include "metalora/objectives.hpp"
#include "metalora/task_model.hpp"

using namespace metalora;

namespace {

// Independent rank oracle: plain SVD of the column concatenation.
int svd_rank(const GroundTruth& gt, double rel_tol) {
  Matrix cat(gt.d, (gt.T + 1) * gt.k);
  for (int t = 0; t <= gt.T; ++t)
    cat.middleCols(t * gt.k, gt.k) = gt.u_star[static_cast<size_t>(t)];
  Eigen::JacobiSVD<Matrix> svd(cat);
  const auto& sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * sv(0)) ++rank;
  return rank;
}

}  // namespace

TEST_CASE("generate_ground_truth yields jointly independent factors") {
  const GroundTruth gt = generate_ground_truth(10, 1, 3, RngSpec{0, 0});
  REQUIRE(gt.u_star.size() == 4);
  for (const Matrix& u : gt.u_star) {
    CHECK(u.rows() == 10);
    CHECK(u.cols() == 1);
  }
  CHECK(gt.a_star.rows() == 10);
  CHECK(gt.a_star.cols() == 10);
  CHECK(svd_rank(gt, 1e-10) == 4);
}

TEST_CASE("generate_ground_truth rejects k(T+1) > d") {
  CHECK_THROWS_AS(generate_ground_truth(2, 1, 2, RngSpec{1, 0}), dimension_error);
  CHECK_THROWS_AS(generate_ground_truth(5, 2, 2, RngSpec{1, 0}), dimension_error);
}

TEST_CASE("diversity check agrees with the SVD oracle") {
  const GroundTruth gt = generate_ground_truth(6, 1, 3, RngSpec{7, 0});
  CHECK(check_task_diversity(gt, 1e-10));
  CHECK(svd_rank(gt, 1e-10) == 4);
}

TEST_CASE("diversity of orthonormal columns") {
  Matrix a = Matrix::Zero(10, 10);
  std::vector<Matrix> u;
  for (int t = 0; t < 4; ++t) {
    Matrix col = Matrix::Zero(10, 1);
    col(t, 0) = 1.0;
    u.push_back(col);
  }
  const GroundTruth gt = GroundTruth::from_parts(a, u);
  CHECK(check_task_diversity(gt, 1e-10));
}

TEST_CASE("duplicate factor breaks diversity") {
  Rng gen(RngSpec{3, 0});
  Matrix a = gen.gaussian_matrix(10, 10);
  std::vector<Matrix> u;
  for (int t = 0; t < 4; ++t) u.push_back(gen.gaussian_matrix(10, 1));
  u[2] = u[1];
  const GroundTruth gt = GroundTruth::from_parts(a, u);
  CHECK_FALSE(check_task_diversity(gt, 1e-10));
}

TEST_CASE("diversity holds almost surely at d=10, k=1, T=3") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const GroundTruth gt = generate_ground_truth(10, 1, 3, RngSpec{seed, 1});
    CHECK(check_task_diversity(gt, 1e-10));
  }
}

TEST_CASE("sample_dense_truth allows the overparametrized regime") {
  const GroundTruth gt = sample_dense_truth(2, 1, 3, RngSpec{4, 1});
  CHECK(gt.d == 2);
  CHECK(gt.u_star.size() == 4);
  // Same seed, same draw.
  const GroundTruth gt2 = sample_dense_truth(2, 1, 3, RngSpec{4, 1});
  CHECK((gt.a_star - gt2.a_star).norm() == 0.0);
}

TEST_CASE("noiseless samples satisfy the model exactly") {
  const GroundTruth gt = generate_ground_truth(8, 2, 3, RngSpec{11, 0});
  for (int t = 1; t <= gt.T + 1; ++t) {
    const TaskDataset data = sample_task(gt, t, 50, 1.0, 0.0, RngSpec{11, 10 + static_cast<std::uint64_t>(t)});
    CHECK(data.task_index == t);
    CHECK(data.n() == 50);
    const Matrix residual = data.y - task_matrix(gt, t) * data.x;
    CHECK(residual.norm() == 0.0);
  }
}

TEST_CASE("sample_task rejects out-of-range task index") {
  const GroundTruth gt = generate_ground_truth(6, 1, 2, RngSpec{2, 0});
  CHECK_THROWS_AS(sample_task(gt, 0, 5, 1.0, 0.1, RngSpec{2, 1}), index_error);
  CHECK_THROWS_AS(sample_task(gt, 4, 5, 1.0, 0.1, RngSpec{2, 1}), index_error);
}

TEST_CASE("task_matrix indexing") {
  const GroundTruth gt = generate_ground_truth(6, 1, 2, RngSpec{2, 3});
  for (int t = 1; t <= 3; ++t) {
    const Matrix expected =
        gt.a_star + gt.u_star[static_cast<size_t>(t - 1)] * gt.u_star[static_cast<size_t>(t - 1)].transpose();
    CHECK((task_matrix(gt, t) - expected).norm() == 0.0);
  }
  CHECK_THROWS_AS(task_matrix(gt, 0), index_error);
}

TEST_CASE("empirical loss of the true parameters approaches the noise floor") {
  const GroundTruth gt = generate_ground_truth(10, 1, 3, RngSpec{13, 0});
  const double sigma_eps = 0.1;
  const TaskDataset data = sample_task(gt, 1, 100000, 1.0, sigma_eps, RngSpec{13, 5});
  const double loss = task_loss_empirical(task_matrix(gt, 1), data);
  const double floor = gt.d * sigma_eps * sigma_eps / 2.0;
  CHECK(std::abs(loss - floor) < 0.05 * floor);
}

TEST_CASE("sigma_x scales the feature magnitude") {
  const GroundTruth gt = generate_ground_truth(6, 1, 2, RngSpec{17, 0});
  const TaskDataset data = sample_task(gt, 1, 20000, 2.0, 0.0, RngSpec{17, 1});
  const double second_moment = data.x.squaredNorm() / (data.n() * gt.d);
  CHECK(std::abs(second_moment - 4.0) < 0.1);
}

TEST_CASE("dataset generation is deterministic") {
  const GroundTruth gt = generate_ground_truth(6, 1, 2, RngSpec{19, 0});
  const TaskDataset a = sample_task(gt, 2, 64, 1.0, 0.1, RngSpec{19, 2});
  const TaskDataset b = sample_task(gt, 2, 64, 1.0, 0.1, RngSpec{19, 2});
  CHECK((a.x - b.x).norm() == 0.0);
  CHECK((a.y - b.y).norm() == 0.0);
}
