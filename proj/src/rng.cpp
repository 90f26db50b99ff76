#include "metalora/rng.hpp"

#include <cmath>

namespace metalora {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_stream(std::uint64_t parent_stream, std::uint64_t salt) {
  return splitmix64(splitmix64(parent_stream) ^ splitmix64(salt + 0x51ed270b7a2cc5ebULL));
}

Rng::Rng(RngSpec spec)
    : gen_(splitmix64(splitmix64(spec.master_seed) ^ splitmix64(spec.stream_id))) {}

std::uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  const double two_pi = 6.283185307179586476925286766559;
  spare_ = mag * std::sin(two_pi * u2);
  has_spare_ = true;
  return mag * std::cos(two_pi * u2);
}

Matrix Rng::gaussian_matrix(int rows, int cols) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = gaussian();
  return m;
}

Vector Rng::gaussian_vector(int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = gaussian();
  return v;
}

Vector Rng::ball(int dim, double radius) {
  Vector v = gaussian_vector(dim);
  const double norm = v.norm();
  if (norm == 0.0) return Vector::Zero(dim);
  const double r = radius * std::pow(uniform(), 1.0 / static_cast<double>(dim));
  return v * (r / norm);
}

}  // namespace metalora
