#pragma once

// Plane-stress bilinear quad kernel on a regular grid of square elements.
//
// Numbering follows the classic 88-line SIMP script: nodes are numbered
// column by column from the top-left corner, two DoFs (x, y) per node, y
// pointing up. Elements are indexed row-major (e = row * nx + col) so that
// element vectors line up with Grid storage.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <type_traits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rrto/error.hpp"
#include "rrto/grid.hpp"

namespace rrto::fem {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat38 = Eigen::Matrix<double, 3, 8>;

inline constexpr double kPoisson = 0.3;

struct Mesh {
  int nx = 0;
  int ny = 0;
  double element_size = 1.0;
  std::vector<int> fixed_dofs;  // sorted, unique
  Eigen::VectorXd load;         // length n_dofs()

  int n_elements() const { return nx * ny; }
  int n_nodes() const { return (nx + 1) * (ny + 1); }
  int n_dofs() const { return 2 * n_nodes(); }
  int element(int row, int col) const { return row * nx + col; }
  int node(int node_row, int node_col) const { return node_col * (ny + 1) + node_row; }

  /// Element DoFs in local order: lower-left, lower-right, upper-right, upper-left.
  std::array<int, 8> element_dofs(int e) const {
    const int row = e / nx;
    const int col = e % nx;
    const int ul = node(row, col);
    const int ll = ul + 1;
    const int ur = ul + ny + 1;
    const int lr = ur + 1;
    return {2 * ll, 2 * ll + 1, 2 * lr, 2 * lr + 1, 2 * ur, 2 * ur + 1, 2 * ul, 2 * ul + 1};
  }

  std::vector<int> free_dofs() const {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n_dofs()) - fixed_dofs.size());
    std::size_t k = 0;
    for (int d = 0; d < n_dofs(); ++d) {
      if (k < fixed_dofs.size() && fixed_dofs[k] == d) {
        ++k;
        continue;
      }
      out.push_back(d);
    }
    return out;
  }

  /// Half MBB beam: rollers on the left edge (x fixed), vertical support at
  /// the bottom-right corner, unit downward load at the top-left node.
  static Mesh half_mbb(int nx, int ny) {
    detail::require(nx > 0 && ny > 0, "Mesh: element counts must be positive");
    Mesh m;
    m.nx = nx;
    m.ny = ny;
    for (int r = 0; r <= ny; ++r) m.fixed_dofs.push_back(2 * m.node(r, 0));
    m.fixed_dofs.push_back(m.n_dofs() - 1);
    m.load = Eigen::VectorXd::Zero(m.n_dofs());
    m.load(2 * m.node(0, 0) + 1) = -1.0;
    return m;
  }
};

// ---------------------------------------------------------------------------
// Element matrices

/// Unit-modulus element stiffness of the unit bilinear quad, nu = 0.3.
inline const Mat8& unit_stiffness() {
  static const Mat8 k0 = [] {
    const double nu = kPoisson;
    const double k[8] = {0.5 - nu / 6,   0.125 + nu / 8, -0.25 - nu / 12, -0.125 + 3 * nu / 8,
                         -0.25 + nu / 12, -0.125 - nu / 8, nu / 6,          0.125 - 3 * nu / 8};
    const int idx[8][8] = {{0, 1, 2, 3, 4, 5, 6, 7}, {1, 0, 7, 6, 5, 4, 3, 2},
                           {2, 7, 0, 5, 6, 3, 4, 1}, {3, 6, 5, 0, 7, 2, 1, 4},
                           {4, 5, 6, 7, 0, 1, 2, 3}, {5, 4, 3, 2, 1, 0, 7, 6},
                           {6, 3, 4, 1, 2, 7, 0, 5}, {7, 2, 1, 4, 3, 6, 5, 0}};
    Mat8 m;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) m(i, j) = k[idx[i][j]] / (1 - nu * nu);
    return m;
  }();
  return k0;
}

/// Plane-stress constitutive matrix for modulus `young`.
inline Mat3 constitutive(double young, double nu = kPoisson) {
  Mat3 d;
  d << 1, nu, 0, nu, 1, 0, 0, 0, (1 - nu) / 2;
  return d * (young / (1 - nu * nu));
}

/// Strain-displacement matrix at natural coordinates (xi, eta) in [-1, 1]^2.
inline Mat38 kinematic(double xi, double eta, double h = 1.0) {
  static constexpr double xs[4] = {-1, 1, 1, -1};
  static constexpr double ys[4] = {-1, -1, 1, 1};
  Mat38 b = Mat38::Zero();
  for (int a = 0; a < 4; ++a) {
    const double dndx = 0.25 * xs[a] * (1 + eta * ys[a]) * 2.0 / h;
    const double dndy = 0.25 * ys[a] * (1 + xi * xs[a]) * 2.0 / h;
    b(0, 2 * a) = dndx;
    b(1, 2 * a + 1) = dndy;
    b(2, 2 * a) = dndy;
    b(2, 2 * a + 1) = dndx;
  }
  return b;
}

struct GaussPoint {
  double xi, eta, weight;  // weight on [-1, 1]^2
};

inline std::array<GaussPoint, 4> gauss_2x2() {
  const double g = 1.0 / std::sqrt(3.0);
  return {{{-g, -g, 1.0}, {g, -g, 1.0}, {g, g, 1.0}, {-g, g, 1.0}}};
}

inline double von_mises(double sxx, double syy, double txy) {
  return std::sqrt(std::max(0.0, sxx * sxx + syy * syy - sxx * syy + 3 * txy * txy));
}

// ---------------------------------------------------------------------------
// Assembly and solve

namespace detail {

inline void check_moduli(const Mesh& mesh, std::span<const double> young) {
  rrto::detail::require(static_cast<int>(young.size()) == mesh.n_elements(),
                        "fem: expected " + std::to_string(mesh.n_elements()) +
                            " element moduli, got " + std::to_string(young.size()));
  for (std::size_t e = 0; e < young.size(); ++e) {
    if (!(young[e] > 0.0) || !std::isfinite(young[e]))
      throw ContractError("fem: element " + std::to_string(e) +
                          " has non-positive modulus " + std::to_string(young[e]));
  }
}

inline Vec8 gather(const Mesh& mesh, const Eigen::VectorXd& u, int e) {
  const auto dofs = mesh.element_dofs(e);
  Vec8 ue;
  for (int i = 0; i < 8; ++i) ue(i) = u(dofs[i]);
  return ue;
}

}  // namespace detail

/// Full (unreduced) global stiffness matrix. Mostly useful for inspection.
inline Eigen::SparseMatrix<double> assemble_full(const Mesh& mesh, std::span<const double> young) {
  detail::check_moduli(mesh, young);
  const Mat8& k0 = unit_stiffness();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(mesh.n_elements()) * 64);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto dofs = mesh.element_dofs(e);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) trips.emplace_back(dofs[i], dofs[j], young[e] * k0(i, j));
  }
  Eigen::SparseMatrix<double> k(mesh.n_dofs(), mesh.n_dofs());
  k.setFromTriplets(trips.begin(), trips.end());
  return k;
}

/// Reduced stiffness system with a cached sparsity pattern and symbolic
/// factorization. Reuse across solves on the same mesh; not thread-safe.
class StiffnessSystem {
 public:
  explicit StiffnessSystem(Mesh mesh) : mesh_(std::move(mesh)) {
    rrto::detail::require(mesh_.load.size() == mesh_.n_dofs(), "fem: load vector has wrong length");
    reduced_.assign(static_cast<std::size_t>(mesh_.n_dofs()), -1);
    free_ = mesh_.free_dofs();
    for (std::size_t i = 0; i < free_.size(); ++i) reduced_[free_[i]] = static_cast<int>(i);

    const int n = static_cast<int>(free_.size());
    std::vector<Eigen::Triplet<double>> trips;
    for (int e = 0; e < mesh_.n_elements(); ++e) {
      const auto dofs = mesh_.element_dofs(e);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          const int ri = reduced_[dofs[i]], rj = reduced_[dofs[j]];
          if (ri >= 0 && rj >= 0) trips.emplace_back(ri, rj, 1.0);
        }
    }
    k_.resize(n, n);
    k_.setFromTriplets(trips.begin(), trips.end());
    k_.makeCompressed();

    // Value slot of every (element, i, j) entry in the compressed matrix.
    slots_.assign(static_cast<std::size_t>(mesh_.n_elements()) * 64, -1);
    for (int e = 0; e < mesh_.n_elements(); ++e) {
      const auto dofs = mesh_.element_dofs(e);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          const int ri = reduced_[dofs[i]], rj = reduced_[dofs[j]];
          if (ri < 0 || rj < 0) continue;
          const int* begin = k_.innerIndexPtr() + k_.outerIndexPtr()[rj];
          const int* end = k_.innerIndexPtr() + k_.outerIndexPtr()[rj + 1];
          slots_[static_cast<std::size_t>(e) * 64 + i * 8 + j] =
              static_cast<int>(std::lower_bound(begin, end, ri) - k_.innerIndexPtr());
        }
    }
    rhs_.resize(n);
    for (int i = 0; i < n; ++i) rhs_(i) = mesh_.load(free_[i]);
  }

  const Mesh& mesh() const { return mesh_; }

  /// Solves K(E) u = f. Returns the full-length displacement vector with
  /// zeros at fixed DoFs.
  Eigen::VectorXd solve(std::span<const double> young) {
    detail::check_moduli(mesh_, young);
    const Mat8& k0 = unit_stiffness();
    double* vals = k_.valuePtr();
    std::fill(vals, vals + k_.nonZeros(), 0.0);
    for (int e = 0; e < mesh_.n_elements(); ++e) {
      const int* slot = slots_.data() + static_cast<std::size_t>(e) * 64;
      for (int ij = 0; ij < 64; ++ij)
        if (slot[ij] >= 0) vals[slot[ij]] += young[e] * k0(ij / 8, ij % 8);
    }

    if (!analyzed_) {
      llt_.analyzePattern(k_);
      analyzed_ = true;
    }
    llt_.factorize(k_);
    const double kappa = condition_estimate();
    if (llt_.info() != Eigen::Success || !(kappa < kMaxCondition)) {
      std::ostringstream os;
      os << "fem: stiffness factorization failed (condition number estimate " << kappa
         << "); the structure is singular or not sufficiently constrained";
      throw SolverError(os.str());
    }
    Eigen::VectorXd x = llt_.solve(rhs_);
    // A couple of refinement sweeps keep the residual at round-off level
    // even when void moduli make K badly scaled.
    for (int sweep = 0; sweep < 2 && relative_residual(x) > 1e-12; ++sweep)
      x += llt_.solve(rhs_ - k_ * x);

    Eigen::VectorXd u = Eigen::VectorXd::Zero(mesh_.n_dofs());
    for (std::size_t i = 0; i < free_.size(); ++i) u(free_[i]) = x(static_cast<Eigen::Index>(i));
    return u;
  }

  /// Reduced matrix from the last solve.
  const Eigen::SparseMatrix<double>& reduced_matrix() const { return k_; }
  const std::vector<int>& free_dofs() const { return free_; }

 private:
  static constexpr double kMaxCondition = 1e15;

  double relative_residual(const Eigen::VectorXd& x) const {
    const double fn = rhs_.lpNorm<Eigen::Infinity>();
    if (fn == 0.0) return 0.0;
    return (k_ * x - rhs_).lpNorm<Eigen::Infinity>() / fn;
  }

  // Squared ratio of extreme Cholesky pivots; cheap and adequate to flag
  // near-singular systems.
  double condition_estimate() const {
    const auto& l = llt_.matrixL().nestedExpression();
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int j = 0; j < l.outerSize(); ++j) {
      double d = 0.0;
      for (typename std::decay_t<decltype(l)>::InnerIterator it(l, j); it; ++it)
        if (it.row() == j) d = std::abs(it.value());
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    if (lo == 0.0 || !std::isfinite(lo) || !std::isfinite(hi))
      return std::numeric_limits<double>::infinity();
    return (hi / lo) * (hi / lo);
  }

  Mesh mesh_;
  std::vector<int> reduced_;
  std::vector<int> free_;
  std::vector<int> slots_;
  Eigen::SparseMatrix<double> k_;
  Eigen::VectorXd rhs_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
  bool analyzed_ = false;
};

inline Eigen::VectorXd assemble_and_solve(const Mesh& mesh, std::span<const double> young) {
  StiffnessSystem sys(mesh);
  return sys.solve(young);
}

// ---------------------------------------------------------------------------
// Post-processing

/// J = f . u
inline double compliance(const Mesh& mesh, const Eigen::VectorXd& u) {
  rrto::detail::require(u.size() == mesh.n_dofs() && mesh.load.size() == mesh.n_dofs(),
                        "compliance: displacement/load length mismatch");
  return mesh.load.dot(u);
}

/// Per-element strain energy density u_e . K0 u_e (unit modulus).
inline std::vector<double> element_energies(const Mesh& mesh, const Eigen::VectorXd& u) {
  rrto::detail::require(u.size() == mesh.n_dofs(), "element_energies: displacement length mismatch");
  const Mat8& k0 = unit_stiffness();
  std::vector<double> ce(static_cast<std::size_t>(mesh.n_elements()));
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Vec8 ue = detail::gather(mesh, u, e);
    ce[e] = ue.dot(k0 * ue);
  }
  return ce;
}

/// J = sum_e E_e u_e . K0 u_e
inline double compliance_by_elements(const Mesh& mesh, const Eigen::VectorXd& u,
                                     std::span<const double> young) {
  detail::check_moduli(mesh, young);
  const auto ce = element_energies(mesh, u);
  double j = 0.0;
  for (std::size_t e = 0; e < ce.size(); ++e) j += young[e] * ce[e];
  return j;
}

/// Element-averaged von Mises stress over the 2x2 Gauss rule. Stresses use
/// the element's own (penalized) modulus.
inline StressField von_mises_field(const Mesh& mesh, const Eigen::VectorXd& u,
                                   std::span<const double> young) {
  rrto::detail::require(u.size() == mesh.n_dofs(),
                        "von_mises_field: expected " + std::to_string(mesh.n_dofs()) +
                            " displacements, got " + std::to_string(u.size()));
  detail::check_moduli(mesh, young);
  const double h = mesh.element_size;
  const double area = h * h;
  const double jac = area / 4.0;  // d(x,y)/d(xi,eta)
  const auto gp = gauss_2x2();
  std::array<Mat38, 4> b;
  for (int p = 0; p < 4; ++p) b[p] = kinematic(gp[p].xi, gp[p].eta, h);
  const Mat3 d0 = constitutive(1.0);

  StressField out{Grid(mesh.ny, mesh.nx)};
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Vec8 ue = detail::gather(mesh, u, e);
    double acc = 0.0;
    for (int p = 0; p < 4; ++p) {
      const Eigen::Vector3d s = young[e] * (d0 * (b[p] * ue));
      acc += von_mises(s(0), s(1), s(2)) * gp[p].weight * jac;
    }
    out.grid.values[e] = acc / area;
  }
  return out;
}

}  // namespace rrto::fem
