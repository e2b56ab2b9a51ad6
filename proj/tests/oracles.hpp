#pragma once

// Test-only reference implementations. These deliberately avoid the code
// paths they are used to check (dense instead of sparse, loops instead of
// matrix products).

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "rrto/fem.hpp"

namespace rrto::oracle {

/// Dense assembly + dense Cholesky on the reduced system.
inline Eigen::VectorXd dense_solve(const fem::Mesh& mesh, const std::vector<double>& young) {
  const int n = mesh.n_dofs();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  const auto& k0 = fem::unit_stiffness();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto dofs = mesh.element_dofs(e);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) k(dofs[i], dofs[j]) += young[e] * k0(i, j);
  }
  const auto free = mesh.free_dofs();
  const int m = static_cast<int>(free.size());
  Eigen::MatrixXd kr(m, m);
  Eigen::VectorXd fr(m);
  for (int i = 0; i < m; ++i) {
    fr(i) = mesh.load(free[i]);
    for (int j = 0; j < m; ++j) kr(i, j) = k(free[i], free[j]);
  }
  const Eigen::VectorXd ur = kr.llt().solve(fr);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m; ++i) u(free[i]) = ur(i);
  return u;
}

inline std::vector<double> random_vector(std::size_t n, double lo, double hi, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace rrto::oracle
