#include "metalora/landscape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace metalora {
namespace {

void check_u_shapes(const std::vector<Matrix>& u, const GroundTruth& gt, const char* who) {
  if (static_cast<int>(u.size()) != gt.T)
    throw dimension_error(std::string(who) + ": expected " + std::to_string(gt.T) +
                          " factor matrices, got " + std::to_string(u.size()));
  for (const Matrix& m : u)
    if (m.rows() != gt.d || m.cols() != gt.k)
      throw dimension_error(std::string(who) + ": factor shape mismatch");
}

void check_params(const MetaParams& p, const GroundTruth& gt, const char* who) {
  if (p.a.rows() != gt.d || p.a.cols() != gt.d)
    throw dimension_error(std::string(who) + ": base matrix shape mismatch");
  check_u_shapes(p.u, gt, who);
}

Matrix star_mat(const GroundTruth& gt, int t) {
  const Matrix& u = gt.u_star[static_cast<size_t>(t)];
  return u * u.transpose();
}

Vector flatten_u(const std::vector<Matrix>& u) {
  long n = 0;
  for (const Matrix& m : u) n += m.size();
  Vector v(n);
  long off = 0;
  for (const Matrix& m : u) {
    v.segment(off, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    off += m.size();
  }
  return v;
}

std::vector<Matrix> unflatten_u(const Vector& v, int d, int k, int T) {
  std::vector<Matrix> u;
  u.reserve(static_cast<size_t>(T));
  long off = 0;
  for (int t = 0; t < T; ++t) {
    u.push_back(Eigen::Map<const Matrix>(v.data() + off, d, k));
    off += static_cast<long>(d) * k;
  }
  return u;
}

Vector reduced_grad_vec(const Vector& x, const GroundTruth& gt) {
  const auto u = unflatten_u(x, gt.d, gt.k, gt.T);
  return flatten_u(reduced_loss_and_grad(u, gt).second);
}

double reduced_loss_at(const Vector& x, const GroundTruth& gt) {
  return reduced_loss_and_grad(unflatten_u(x, gt.d, gt.k, gt.T), gt).first;
}

}  // namespace

const char* to_string(Classification c) {
  switch (c) {
    case Classification::GlobalMinimum: return "GlobalMinimum";
    case Classification::StrictSaddle: return "StrictSaddle";
    case Classification::CandidateLocalMinimum: return "CandidateLocalMinimum";
    case Classification::NotStationary: return "NotStationary";
  }
  return "?";
}

const char* to_string(NetMode m) {
  return m == NetMode::FullNet ? "FullNet" : "MonteCarlo";
}

std::vector<Matrix> compute_b_matrices(const std::vector<Matrix>& u, const GroundTruth& gt) {
  check_u_shapes(u, gt, "compute_b_matrices");
  std::vector<Matrix> delta;
  delta.reserve(u.size());
  Matrix mean = Matrix::Zero(gt.d, gt.d);
  for (int t = 0; t < gt.T; ++t) {
    const Matrix& ut = u[static_cast<size_t>(t)];
    delta.push_back(ut * ut.transpose() - star_mat(gt, t));
    mean += delta.back();
  }
  mean /= static_cast<double>(gt.T);
  for (Matrix& m : delta) m -= mean;
  return delta;
}

Matrix hessian_meta(const MetaParams& p, const GroundTruth& gt) {
  check_params(p, gt, "hessian_meta");
  const int d = gt.d, k = gt.k, T = gt.T;
  const long n = static_cast<long>(d) * d + static_cast<long>(T) * d * k;
  if (n > 5000)
    throw dimension_error("hessian_meta: dense order " + std::to_string(n) +
                          " exceeds the 5000 guard");
  Matrix h = Matrix::Zero(n, n);
  h.topLeftCorner(d * d, d * d) = static_cast<double>(T) * Matrix::Identity(d * d, d * d);
  for (int t = 0; t < T; ++t) {
    const Matrix& ut = p.u[static_cast<size_t>(t)];
    const Matrix r = p.a - gt.a_star + ut * ut.transpose() - star_mat(gt, t);
    const Matrix s = r + r.transpose();
    const long off = static_cast<long>(d) * d + static_cast<long>(t) * d * k;
    for (int j = 0; j < k; ++j) {
      const Vector uj = ut.col(j);
      for (int c = 0; c < d; ++c) {
        const long col = off + static_cast<long>(j) * d + c;
        // d(grad_A)/dU_t for V = e_c e_j': vec(e_c uj' + uj e_c')
        for (int idx = 0; idx < d; ++idx) {
          h(c + static_cast<long>(idx) * d, col) += uj(idx);
          h(static_cast<long>(c) * d + idx, col) += uj(idx);
        }
      }
    }
    h.block(off, 0, static_cast<long>(d) * k, d * d) =
        h.block(0, off, d * d, static_cast<long>(d) * k).transpose();
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        Matrix blk = 2.0 * ut.col(i).dot(ut.col(j)) * Matrix::Identity(d, d) +
                     2.0 * ut.col(j) * ut.col(i).transpose();
        if (i == j) blk += s;
        h.block(off + static_cast<long>(i) * d, off + static_cast<long>(j) * d, d, d) = blk;
      }
  }
  return h;
}

Vector hessian_meta_vec(const MetaParams& p, const GroundTruth& gt, const Vector& v) {
  check_params(p, gt, "hessian_meta_vec");
  const int d = gt.d, k = gt.k, T = gt.T;
  if (v.size() != static_cast<long>(d) * d + static_cast<long>(T) * d * k)
    throw dimension_error("hessian_meta_vec: direction length mismatch");
  const Matrix va = Eigen::Map<const Matrix>(v.data(), d, d);
  Matrix out_a = static_cast<double>(T) * va;
  Vector out(v.size());
  long off = static_cast<long>(d) * d;
  for (int t = 0; t < T; ++t) {
    const Matrix& ut = p.u[static_cast<size_t>(t)];
    const Matrix vu = Eigen::Map<const Matrix>(v.data() + off, d, k);
    const Matrix r = p.a - gt.a_star + ut * ut.transpose() - star_mat(gt, t);
    const Matrix dr = va + vu * ut.transpose() + ut * vu.transpose();
    out_a += vu * ut.transpose() + ut * vu.transpose();
    const Matrix out_u = (dr + dr.transpose()) * ut + (r + r.transpose()) * vu;
    out.segment(off, static_cast<long>(d) * k) =
        Eigen::Map<const Vector>(out_u.data(), out_u.size());
    off += static_cast<long>(d) * k;
  }
  out.head(static_cast<long>(d) * d) = Eigen::Map<const Vector>(out_a.data(), out_a.size());
  return out;
}

Matrix schur_complement_q(const MetaParams& p, const GroundTruth& gt) {
  check_params(p, gt, "schur_complement_q");
  const int d = gt.d, k = gt.k, T = gt.T;
  const long n = static_cast<long>(T) * d * k;
  Matrix q = Matrix::Zero(n, n);
  const double c = 2.0 / static_cast<double>(T);
  for (int t = 0; t < T; ++t) {
    const Matrix& ut = p.u[static_cast<size_t>(t)];
    const Matrix r = p.a - gt.a_star + ut * ut.transpose() - star_mat(gt, t);
    const Matrix s = r + r.transpose();
    const long to = (static_cast<long>(t) * k) * d;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        Matrix blk = 2.0 * ut.col(i).dot(ut.col(j)) * Matrix::Identity(d, d) +
                     2.0 * ut.col(j) * ut.col(i).transpose();
        if (i == j) blk += s;
        q.block(to + static_cast<long>(i) * d, to + static_cast<long>(j) * d, d, d) = blk;
      }
    for (int s2 = 0; s2 < T; ++s2) {
      const Matrix& us = p.u[static_cast<size_t>(s2)];
      const long so = (static_cast<long>(s2) * k) * d;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
          q.block(to + static_cast<long>(i) * d, so + static_cast<long>(j) * d, d, d) -=
              c * (ut.col(i).dot(us.col(j)) * Matrix::Identity(d, d) +
                   us.col(j) * ut.col(i).transpose());
    }
  }
  return q;
}

double g_quadratic_form(const Vector& alpha, const Vector& z, const Matrix& u_hat_1,
                        const Matrix& u_hat_2, double lambda) {
  const long k = u_hat_1.cols();
  if (u_hat_2.cols() != k || u_hat_1.rows() != u_hat_2.rows())
    throw dimension_error("g_quadratic_form: factor pair shape mismatch");
  if (alpha.size() != 2 * k) throw dimension_error("g_quadratic_form: alpha must have length 2k");
  if (z.size() != u_hat_1.rows()) throw dimension_error("g_quadratic_form: z length mismatch");
  if (std::abs(z.norm() - 1.0) > 1e-8)
    throw precondition_error("g_quadratic_form: z is not unit norm");
  const Matrix dhat = u_hat_2 * u_hat_2.transpose() - u_hat_1 * u_hat_1.transpose();
  const double res = (dhat * z).norm();
  if (res > 1e-8 * std::max(1.0, dhat.norm()))
    throw precondition_error("g_quadratic_form: z has kernel residual " + std::to_string(res));
  const Vector a1 = alpha.head(k), a2 = alpha.tail(k);
  return (u_hat_1 * a1 + u_hat_2 * a2).squaredNorm() +
         lambda * (a1.squaredNorm() - a2.squaredNorm());
}

std::optional<Vector> find_negative_curvature_t2(const MetaParams& p, const GroundTruth& gt,
                                                 double tol) {
  if (gt.T != 2) throw dimension_error("find_negative_curvature_t2: needs T=2");
  check_params(p, gt, "find_negative_curvature_t2");
  const int d = gt.d, k = gt.k;
  const double loss = meta_loss_population(p, gt);
  const double gn = flatten(meta_grad_population(p, gt)).norm();
  if (!(gn < tol) || !(loss > tol)) return std::nullopt;

  std::optional<Vector> best;
  double best_ray = -1e-8;  // accept only verified negative curvature
  const double lam_tol = std::max(tol, 1e-12);
  for (double ker_tol : {1e-8, 1e-6, 1e-4}) {
    for (int orient = 0; orient < 2; ++orient) {
      const int i1 = orient, i2 = 1 - orient;
      const Matrix& u1 = p.u[static_cast<size_t>(i1)];
      const Matrix& u2 = p.u[static_cast<size_t>(i2)];
      const Matrix dhat = u2 * u2.transpose() - u1 * u1.transpose();
      const Matrix dstar = star_mat(gt, i2) - star_mat(gt, i1);
      Eigen::SelfAdjointEigenSolver<Matrix> eh(dhat);
      const double scale = std::max(eh.eigenvalues().cwiseAbs().maxCoeff(), 1.0);
      std::vector<long> ker;
      int nneg = 0;
      for (long c = 0; c < d; ++c) {
        if (std::abs(eh.eigenvalues()(c)) < ker_tol * scale) ker.push_back(c);
        if (eh.eigenvalues()(c) < -ker_tol * scale) ++nneg;
      }
      if (ker.empty()) continue;
      Matrix kbasis(d, static_cast<long>(ker.size()));
      for (size_t c = 0; c < ker.size(); ++c) kbasis.col(static_cast<long>(c)) = eh.eigenvectors().col(ker[c]);
      Eigen::SelfAdjointEigenSolver<Matrix> em(kbasis.transpose() * dstar * kbasis);

      // alpha seed: smallest right-singular vector of [U1 U2]
      Matrix pcat(d, 2 * k);
      pcat << u1, u2;
      Eigen::JacobiSVD<Matrix> svd(pcat, Eigen::ComputeFullV);
      Vector alpha0;
      if (svd.singularValues()(0) < 1e-12) {
        alpha0 = Vector::Zero(2 * k);
        alpha0(k) = 1.0;
      } else {
        alpha0 = svd.matrixV().col(2 * k - 1);
      }

      for (long e = em.eigenvalues().size() - 1; e >= 0; --e) {
        const double lam = em.eigenvalues()(e);
        if (lam <= lam_tol) break;
        const Vector z = kbasis * em.eigenvectors().col(e);
        if ((dstar * z - lam * z).norm() > 1e-6 * std::max(1.0, std::abs(lam))) continue;
        Vector a1 = alpha0.head(k), a2 = alpha0.tail(k);
        if (nneg == k && a2.norm() > 1e-12) {
          const double s = a2.norm();
          a1 /= s;
          a2 /= s;
        }
        auto gval = [&](const Vector& b1, const Vector& b2) {
          return (u1 * b1 + u2 * b2).squaredNorm() +
                 lam * (b1.squaredNorm() - b2.squaredNorm());
        };
        double gv = gval(a1, a2);
        if (gv > -tol) {
          const Vector s = u1 * a1 + u2 * a2;
          const Vector g1 = 2.0 * (u1.transpose() * s) + 2.0 * lam * a1;
          const Vector g2 = 2.0 * (u2.transpose() * s) - 2.0 * lam * a2;
          if (std::sqrt(g1.squaredNorm() + g2.squaredNorm()) < 1e-12) continue;
          bool moved = false;
          double st = 1.0;
          for (int e2 = 0; e2 <= 12; ++e2, st *= 0.1) {
            const Vector c1 = a1 - st * g1, c2 = a2 - st * g2;
            if (gval(c1, c2) < -tol) {
              a1 = c1;
              a2 = c2;
              moved = true;
              break;
            }
          }
          if (!moved) continue;
        }
        std::vector<Matrix> du(2);
        du[static_cast<size_t>(i1)] = z * a1.transpose();
        du[static_cast<size_t>(i2)] = -z * a2.transpose();
        Matrix da = Matrix::Zero(d, d);
        for (int t = 0; t < 2; ++t) {
          const Matrix& ut = p.u[static_cast<size_t>(t)];
          da -= (du[static_cast<size_t>(t)] * ut.transpose() +
                 ut * du[static_cast<size_t>(t)].transpose()) /
                2.0;
        }
        Vector full(static_cast<long>(d) * d + 2L * d * k);
        full.head(static_cast<long>(d) * d) = Eigen::Map<const Vector>(da.data(), da.size());
        full.segment(static_cast<long>(d) * d, static_cast<long>(d) * k) =
            Eigen::Map<const Vector>(du[0].data(), du[0].size());
        full.tail(static_cast<long>(d) * k) =
            Eigen::Map<const Vector>(du[1].data(), du[1].size());
        full.normalize();
        const double ray = full.dot(hessian_meta_vec(p, gt, full));
        if (ray < best_ray) {
          best_ray = ray;
          best = full;
        }
      }
    }
    if (best) break;  // prefer directions from the tightest kernel tolerance
  }
  return best;
}

StationaryReport classify_stationary_point(const MetaParams& p, const GroundTruth& gt,
                                           double grad_tol, double eig_tol) {
  check_params(p, gt, "classify_stationary_point");
  StationaryReport rep;
  rep.loss_value = meta_loss_population(p, gt);
  rep.grad_norm = flatten(meta_grad_population(p, gt)).norm();
  for (const Matrix& b : compute_b_matrices(p.u, gt)) rep.b_norms.push_back(b.norm());
  rep.min_hessian_eig = std::numeric_limits<double>::quiet_NaN();
  if (rep.grad_norm >= grad_tol) {
    rep.classification = Classification::NotStationary;
    return rep;
  }
  if (rep.loss_value < grad_tol) {
    rep.classification = Classification::GlobalMinimum;
    const long n = static_cast<long>(gt.d) * gt.d + static_cast<long>(gt.T) * gt.d * gt.k;
    if (n <= 5000)
      rep.min_hessian_eig =
          Eigen::SelfAdjointEigenSolver<Matrix>(hessian_meta(p, gt)).eigenvalues()(0);
    return rep;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(hessian_meta(p, gt));
  rep.min_hessian_eig = es.eigenvalues()(0);
  if (rep.min_hessian_eig < -eig_tol) {
    rep.classification = Classification::StrictSaddle;
    if (gt.T == 2) rep.curvature_direction = find_negative_curvature_t2(p, gt, grad_tol);
    if (!rep.curvature_direction) rep.curvature_direction = es.eigenvectors().col(0);
    return rep;
  }
  rep.classification = Classification::CandidateLocalMinimum;
  return rep;
}

std::pair<double, std::vector<Matrix>> reduced_loss_and_grad(const std::vector<Matrix>& u,
                                                             const GroundTruth& gt) {
  check_u_shapes(u, gt, "reduced_loss_and_grad");
  const std::vector<Matrix> b = compute_b_matrices(u, gt);
  double loss = 0.0;
  std::vector<Matrix> grad;
  grad.reserve(u.size());
  for (int t = 0; t < gt.T; ++t) {
    loss += b[static_cast<size_t>(t)].squaredNorm();
    grad.push_back(4.0 * b[static_cast<size_t>(t)] * u[static_cast<size_t>(t)]);
  }
  return {loss, std::move(grad)};
}

Matrix reduced_hessian_fd(const std::vector<Matrix>& u, const GroundTruth& gt, double h) {
  check_u_shapes(u, gt, "reduced_hessian_fd");
  const Vector x = flatten_u(u);
  const long n = x.size();
  Matrix hess(n, n);
  Vector e = Vector::Zero(n);
  for (long j = 0; j < n; ++j) {
    e(j) = h;
    hess.col(j) = (reduced_grad_vec(x + e, gt) - reduced_grad_vec(x - e, gt)) / (2.0 * h);
    e(j) = 0.0;
  }
  return 0.5 * (hess + hess.transpose());
}

MetaParams lift_with_critical_a(const std::vector<Matrix>& u, const GroundTruth& gt) {
  check_u_shapes(u, gt, "lift_with_critical_a");
  Matrix a = gt.a_star;
  for (int t = 0; t < gt.T; ++t) {
    const Matrix& ut = u[static_cast<size_t>(t)];
    a -= (ut * ut.transpose() - star_mat(gt, t)) / static_cast<double>(gt.T);
  }
  MetaParams p;
  p.a = std::move(a);
  p.u = u;
  return p;
}

std::optional<std::pair<std::vector<Matrix>, StationaryReport>> probe_spurious_minimum(
    const GroundTruth& gt, const TrainConfig& search_cfg, RngSpec rng) {
  const int d = gt.d, k = gt.k, T = gt.T;
  const long n = static_cast<long>(T) * d * k;
  Rng gen(rng);
  const double fd_h = 1e-6;
  for (int start = 0; start < search_cfg.multistarts; ++start) {
    const double s = search_cfg.init_scale * std::pow(10.0, -1.0 + 1.5 * gen.uniform());
    Vector x = s * gen.gaussian_vector(static_cast<int>(n));
    // Levenberg-Marquardt on F(x) = grad Lhat(x) with a finite-difference Jacobian
    double lam = 1e-3;
    Vector f = reduced_grad_vec(x, gt);
    double fsq = f.squaredNorm();
    for (int it = 0; it < 300 && fsq > 1e-26; ++it) {
      Matrix jac(n, n);
      Vector e = Vector::Zero(n);
      for (long j = 0; j < n; ++j) {
        e(j) = fd_h;
        jac.col(j) = (reduced_grad_vec(x + e, gt) - reduced_grad_vec(x - e, gt)) / (2.0 * fd_h);
        e(j) = 0.0;
      }
      const Matrix a = jac.transpose() * jac + lam * Matrix::Identity(n, n);
      const Vector dx = a.ldlt().solve(-(jac.transpose() * f));
      const Vector xn = x + dx;
      const Vector fn = reduced_grad_vec(xn, gt);
      if (fn.squaredNorm() < fsq) {
        x = xn;
        f = fn;
        fsq = f.squaredNorm();
        lam = std::max(lam * 0.3, 1e-12);
      } else {
        lam *= 10.0;
        if (lam > 1e8) break;
      }
    }
    if (std::sqrt(fsq) >= 1e-8) continue;
    const auto u = unflatten_u(x, d, k, T);
    const double lhat = reduced_loss_and_grad(u, gt).first;
    if (lhat <= 1e-4) continue;
    Eigen::SelfAdjointEigenSolver<Matrix> es(reduced_hessian_fd(u, gt));
    if (es.eigenvalues()(0) <= 1e-8) continue;
    const MetaParams lifted = lift_with_critical_a(u, gt);
    StationaryReport rep = classify_stationary_point(lifted, gt, 1e-8, 1e-9);
    return std::make_pair(u, std::move(rep));
  }
  return std::nullopt;
}

NetCertificate certify_local_min(const std::vector<Matrix>& u_hat, const GroundTruth& gt,
                                 double delta, double epsilon, double gamma,
                                 long long max_points, NetMode mode) {
  check_u_shapes(u_hat, gt, "certify_local_min");
  if (!(delta > 0.0) || !(epsilon > 0.0) || !(gamma > 0.0))
    throw precondition_error("certify_local_min: delta, epsilon, gamma must be positive");
  if (gt.k != 1)
    throw dimension_error(
        "certify_local_min: restricted to k=1 (larger k has continuous factor symmetry "
        "along which r vanishes)");
  if (max_points < 1) throw precondition_error("certify_local_min: max_points must be >= 1");
  const int d = gt.d, T = gt.T;
  const int n = T * d;  // k = 1
  NetCertificate cert;
  cert.center = u_hat;
  cert.delta = delta;
  cert.epsilon = epsilon;
  cert.gamma = gamma;
  cert.mode = mode;
  const Vector center = flatten_u(u_hat);
  std::vector<Matrix> star(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) star[static_cast<size_t>(t)] = star_mat(gt, t);

  Matrix delta_t(d, d), mean(d, d);
  Vector ut(d);
  std::vector<Matrix> dmats(static_cast<size_t>(T), Matrix(d, d));
  auto r_value = [&](const Vector& q) {
    // q: unit direction; U = u_hat + delta q
    mean.setZero();
    for (int t = 0; t < T; ++t) {
      ut = Eigen::Map<const Vector>(center.data() + static_cast<long>(t) * d, d) +
           delta * q.segment(static_cast<long>(t) * d, d);
      dmats[static_cast<size_t>(t)].noalias() = ut * ut.transpose();
      dmats[static_cast<size_t>(t)] -= star[static_cast<size_t>(t)];
      mean += dmats[static_cast<size_t>(t)];
    }
    mean /= static_cast<double>(T);
    double r = 0.0;
    for (int t = 0; t < T; ++t) {
      delta_t = dmats[static_cast<size_t>(t)] - mean;
      ut = Eigen::Map<const Vector>(center.data() + static_cast<long>(t) * d, d) +
           delta * q.segment(static_cast<long>(t) * d, d);
      r += 4.0 * delta * q.segment(static_cast<long>(t) * d, d).dot(delta_t * ut);
    }
    return r;
  };

  double min_r = std::numeric_limits<double>::infinity();
  long long checked = 0;
  if (mode == NetMode::FullNet) {
    if (n > 8) {
      const double est =
          2.0 * n * std::pow(std::ceil(std::sqrt(n - 1.0) * delta / epsilon) + 1.0, n - 1);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3g", est);
      throw infeasible_error("certify_local_min: FullNet needs Tdk <= 8; Tdk = " +
                             std::to_string(n) + " would require roughly " + buf + " points");
    }
    // Cube-surface grid: faces of [-1,1]^n projected radially. Projection of
    // points outside the unit ball onto the sphere is 1-Lipschitz, so a grid
    // of spacing hh per face gives net resolution hh*sqrt(n-1)/2 on the unit
    // sphere, then scaled by delta.
    const double eps_unit = epsilon / delta;
    int m = 2;
    if (n > 1) {
      const double hh = 2.0 * eps_unit / std::sqrt(static_cast<double>(n - 1));
      m = static_cast<int>(std::ceil(2.0 / hh)) + 1;
      if (m < 2) m = 2;
    }
    const double per_face = std::pow(static_cast<double>(m), n - 1);
    const double total = 2.0 * n * per_face;
    if (total > static_cast<double>(max_points))
      throw infeasible_error("certify_local_min: FullNet needs " + std::to_string(total) +
                             " points, above the max_points budget of " +
                             std::to_string(max_points));
    Vector x(n), q(n);
    std::vector<int> idx(static_cast<size_t>(n > 1 ? n - 1 : 1), 0);
    for (int axis = 0; axis < n; ++axis) {
      for (int sign = -1; sign <= 1; sign += 2) {
        std::fill(idx.begin(), idx.end(), 0);
        const long long face_points = static_cast<long long>(per_face);
        for (long long c = 0; c < face_points; ++c) {
          int pos = 0;
          for (int a = 0; a < n; ++a) {
            if (a == axis) {
              x(a) = static_cast<double>(sign);
            } else {
              x(a) = (n > 1) ? -1.0 + 2.0 * idx[static_cast<size_t>(pos)] / (m - 1) : 0.0;
              ++pos;
            }
          }
          q = x / x.norm();
          min_r = std::min(min_r, r_value(q));
          ++checked;
          for (size_t a = 0; a < idx.size(); ++a) {
            if (++idx[a] < m) break;
            idx[a] = 0;
          }
        }
      }
    }
    cert.certified = min_r > gamma;
  } else {
    // Fixed stream: the certificate must be reproducible without a seed input.
    Rng gen(RngSpec{0x6d657461106f7261ULL, 3});
    Vector q(n);
    for (long long i = 0; i < max_points; ++i) {
      q = gen.gaussian_vector(n);
      q.normalize();
      min_r = std::min(min_r, r_value(q));
      ++checked;
    }
    cert.certified = false;
  }
  cert.min_r_value = min_r;
  cert.points_checked = checked;
  return cert;
}

}  // namespace metalora
