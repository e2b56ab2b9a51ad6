#pragma once

// SIMP compliance minimization with a volume constraint, sensitivity
// filtering and Optimality Criteria updates (88-line script conventions).

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rrto/error.hpp"
#include "rrto/fem.hpp"
#include "rrto/grid.hpp"

namespace rrto::topopt {

struct SimpConfig {
  double penal = 3.0;
  double e0 = 1.0;
  double emin = 1e-9;
  double filter_radius = 1.5;  // in element lengths
  double volfrac = 0.5;
  double move = 0.2;
  double eta = 0.5;
  double lambda_lo = 1e-9;
  double lambda_hi = 1e9;
  int max_iters = 1000;  // guard only; the 88-line loop itself is uncapped
  double tol_change = 0.01;

  void validate() const {
    auto bad = [](const std::string& m) { throw ConfigError("SimpConfig: " + m); };
    if (!(volfrac > 0.0 && volfrac < 1.0)) bad("volfrac must lie in (0, 1)");
    if (!(filter_radius > 0.0)) bad("filter_radius must be positive");
    if (!(emin > 0.0 && emin < e0)) bad("require 0 < emin < e0");
    if (!(penal >= 1.0)) bad("penal must be >= 1");
    if (!(move >= 0.0)) bad("move must be non-negative");
    if (!(eta > 0.0)) bad("eta must be positive");
    if (!(lambda_lo > 0.0 && lambda_lo < lambda_hi)) bad("invalid lambda bracket");
    if (max_iters < 1) bad("max_iters must be >= 1");
    if (!(tol_change > 0.0)) bad("tol_change must be positive");
  }
};

/// E_e = Emin + rho_e^p (E0 - Emin)
inline std::vector<double> penalize(std::span<const double> rho, const SimpConfig& cfg) {
  std::vector<double> young(rho.size());
  for (std::size_t e = 0; e < rho.size(); ++e) {
    if (!(rho[e] >= 0.0 && rho[e] <= 1.0))
      throw ContractError("penalize: density " + std::to_string(rho[e]) + " at element " +
                          std::to_string(e) + " outside [0, 1]");
    young[e] = cfg.emin + std::pow(rho[e], cfg.penal) * (cfg.e0 - cfg.emin);
  }
  return young;
}

// ---------------------------------------------------------------------------
// Filter

/// Cone-kernel weights w_ij = max(0, R - |c_i - c_j|) with cached row sums.
struct FilterOperator {
  Eigen::SparseMatrix<double, Eigen::RowMajor> weights;
  Eigen::VectorXd row_sums;

  /// Normalized weighted average of a field (density filtering).
  Eigen::VectorXd apply(const Eigen::VectorXd& field) const {
    return (weights * field).cwiseQuotient(row_sums);
  }
};

inline FilterOperator build_filter(const fem::Mesh& mesh, double radius) {
  detail::require(radius > 0.0, "build_filter: radius must be positive");
  const int reach = static_cast<int>(std::ceil(radius)) - 1;
  std::vector<Eigen::Triplet<double>> trips;
  for (int r1 = 0; r1 < mesh.ny; ++r1)
    for (int c1 = 0; c1 < mesh.nx; ++c1) {
      const int e1 = mesh.element(r1, c1);
      for (int r2 = std::max(r1 - reach, 0); r2 <= std::min(r1 + reach, mesh.ny - 1); ++r2)
        for (int c2 = std::max(c1 - reach, 0); c2 <= std::min(c1 + reach, mesh.nx - 1); ++c2) {
          const double dist = std::hypot(r1 - r2, c1 - c2);
          const double w = std::max(0.0, radius - dist);
          if (w > 0.0) trips.emplace_back(e1, mesh.element(r2, c2), w);
        }
    }
  FilterOperator f;
  f.weights.resize(mesh.n_elements(), mesh.n_elements());
  f.weights.setFromTriplets(trips.begin(), trips.end());
  f.weights.makeCompressed();
  f.row_sums = f.weights * Eigen::VectorXd::Ones(mesh.n_elements());
  return f;
}

// ---------------------------------------------------------------------------
// Sensitivities

/// dJ/drho_e = -p rho_e^(p-1) (E0 - Emin) u_e . K0 u_e
///
/// The closed form is often printed without the rho^(p-1) factor; the
/// version here is the chain rule through the penalization law.
inline std::vector<double> compliance_sensitivity(const fem::Mesh& mesh, std::span<const double> rho,
                                                  const Eigen::VectorXd& u, const SimpConfig& cfg) {
  detail::require(static_cast<int>(rho.size()) == mesh.n_elements(),
                  "compliance_sensitivity: density length mismatch");
  const auto ce = fem::element_energies(mesh, u);
  std::vector<double> grad(rho.size());
  for (std::size_t e = 0; e < rho.size(); ++e)
    grad[e] = -cfg.penal * std::pow(rho[e], cfg.penal - 1) * (cfg.e0 - cfg.emin) * ce[e];
  return grad;
}

inline std::vector<double> volume_sensitivity(const fem::Mesh& mesh) {
  return std::vector<double>(static_cast<std::size_t>(mesh.n_elements()),
                             mesh.element_size * mesh.element_size);
}

struct FilteredSensitivities {
  std::vector<double> compliance;
  std::vector<double> volume;
};

/// Sensitivity filter of the reference script:
///   dc_e <- sum_i w_ei rho_i dc_i / (max(rho_e, 1e-3) sum_i w_ei)
/// The volume gradient goes through the plain normalized filter.
inline FilteredSensitivities filter_sensitivities(std::span<const double> grad_j,
                                                  std::span<const double> grad_g,
                                                  std::span<const double> rho,
                                                  const FilterOperator& filt) {
  const auto n = static_cast<Eigen::Index>(rho.size());
  detail::require(filt.weights.rows() == n && static_cast<Eigen::Index>(grad_j.size()) == n &&
                      static_cast<Eigen::Index>(grad_g.size()) == n,
                  "filter_sensitivities: size mismatch with filter operator");
  Eigen::Map<const Eigen::VectorXd> dc(grad_j.data(), n), dv(grad_g.data(), n), x(rho.data(), n);
  const Eigen::VectorXd num = filt.weights * x.cwiseProduct(dc);
  const Eigen::VectorXd vol = filt.apply(dv);
  FilteredSensitivities out{std::vector<double>(rho.size()), std::vector<double>(rho.size())};
  for (Eigen::Index e = 0; e < n; ++e) {
    out.compliance[e] = num(e) / filt.row_sums(e) / std::max(1e-3, x(e));
    out.volume[e] = vol(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimality Criteria

/// One OC step. The Lagrange multiplier is bisected until the updated
/// design meets the volume fraction.
inline std::vector<double> oc_update(std::span<const double> rho, std::span<const double> grad_j,
                                     std::span<const double> grad_g, const SimpConfig& cfg) {
  const std::size_t n = rho.size();
  detail::require(grad_j.size() == n && grad_g.size() == n, "oc_update: size mismatch");
  std::vector<double> ratio(n), next(n);
  for (std::size_t e = 0; e < n; ++e) ratio[e] = std::max(0.0, -grad_j[e]) / grad_g[e];

  auto update = [&](double lambda) {
    double sum = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      const double trial = rho[e] * std::pow(ratio[e] / lambda, cfg.eta);
      const double lo = std::max(0.0, rho[e] - cfg.move);
      const double hi = std::min(1.0, rho[e] + cfg.move);
      next[e] = std::clamp(trial, lo, hi);
      sum += next[e];
    }
    return sum / static_cast<double>(n);
  };

  constexpr double vol_tol = 1e-4;
  double l1 = cfg.lambda_lo, l2 = cfg.lambda_hi;
  const double v_lo = update(l1);
  const double v_hi = update(l2);
  if (v_lo < cfg.volfrac - vol_tol || v_hi > cfg.volfrac + vol_tol) {
    // A move limit of zero (or a design already pinned by its bounds) can
    // leave the volume independent of lambda; that is fine if it is already
    // feasible.
    if (std::abs(v_lo - v_hi) < 1e-15 && std::abs(v_lo - cfg.volfrac) <= vol_tol) {
      update(l1);
      return next;
    }
    int neg = 0, zero = 0, pos = 0;
    for (double g : grad_j) (g < 0 ? neg : g > 0 ? pos : zero)++;
    std::ostringstream os;
    os << "oc_update: cannot bracket the volume constraint " << cfg.volfrac
       << " (volume " << v_lo << " at lambda=" << l1 << ", " << v_hi << " at lambda=" << l2
       << "); compliance gradient signs: " << neg << " negative, " << zero << " zero, " << pos
       << " positive";
    throw SolverError(os.str());
  }
  while ((l2 - l1) / (l1 + l2) > 1e-12) {
    const double mid = 0.5 * (l1 + l2);
    if (update(mid) > cfg.volfrac)
      l1 = mid;
    else
      l2 = mid;
  }
  update(0.5 * (l1 + l2));
  return next;
}

// ---------------------------------------------------------------------------
// Driver

struct IterationRecord {
  double compliance;
  double volume;
  double change;
};

struct OptimizationTrace {
  std::vector<IterationRecord> iterations;
  bool converged = false;
  double final_compliance = 0.0;  // J evaluated on the returned design
  double final_volume = 0.0;
};

struct OptimizationResult {
  DensityField rho;
  OptimizationTrace trace;
  Eigen::VectorXd displacements;  // solved on the returned design
};

inline OptimizationResult optimize(const SimpConfig& cfg, const fem::Mesh& mesh) {
  cfg.validate();
  fem::StiffnessSystem system(mesh);
  const FilterOperator filt = build_filter(mesh, cfg.filter_radius);
  const std::vector<double> dv = volume_sensitivity(mesh);

  std::vector<double> x(static_cast<std::size_t>(mesh.n_elements()), cfg.volfrac);
  OptimizationResult out;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const auto young = penalize(x, cfg);
    const Eigen::VectorXd u = system.solve(young);
    const double j = fem::compliance(mesh, u);
    const auto dc = compliance_sensitivity(mesh, x, u, cfg);
    const auto filtered = filter_sensitivities(dc, dv, x, filt);
    auto next = oc_update(x, filtered.compliance, filtered.volume, cfg);

    double change = 0.0, vol = 0.0;
    for (std::size_t e = 0; e < x.size(); ++e) {
      change = std::max(change, std::abs(next[e] - x[e]));
      vol += x[e];
    }
    out.trace.iterations.push_back({j, vol / static_cast<double>(x.size()), change});
    x = std::move(next);
    if (change <= cfg.tol_change) {
      out.trace.converged = true;
      break;
    }
  }

  const auto young = penalize(x, cfg);
  out.displacements = system.solve(young);
  out.trace.final_compliance = fem::compliance(mesh, out.displacements);
  out.rho.grid = Grid(mesh.ny, mesh.nx, std::move(x));
  out.trace.final_volume = out.rho.volume_fraction();
  return out;
}

}  // namespace rrto::topopt
