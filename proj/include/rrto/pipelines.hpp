#pragma once

// Direct (geometry -> response) and inverse (response -> geometry) pipelines
// built from a geometry RRAE, an optional solution RRAE and latent maps.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rrto/dataset.hpp"
#include "rrto/error.hpp"
#include "rrto/fem.hpp"
#include "rrto/latentmap.hpp"
#include "rrto/rrae.hpp"
#include "rrto/topopt.hpp"

namespace rrto::pipelines {

using json = nlohmann::json;
using latentmap::Direction;
using latentmap::LatentMap;
using latentmap::Qoi;
using nn::RowMat;
using nn::Tensor;
using rrae::RraeModel;

/// Solution RRAE kind for a field QoI.
inline rrae::Kind solution_kind(Qoi q) {
  if (q == Qoi::scalar) throw ContractError("the scalar QoI has no solution autoencoder");
  return q == Qoi::d1 ? rrae::Kind::sol1d : rrae::Kind::sol2d;
}

/// QoI samples of one split, shaped as the pipeline consumes them:
/// (n, 1) scalars, (n, 80) diagonals or (n, 1, rows, cols) fields.
inline Tensor qoi_data(const dataset::DatasetBundle& b, Qoi q, const std::string& split) {
  if (q != Qoi::scalar) return rrae::training_data(b, solution_kind(q), split);
  const auto& s = b.split(split).s_scalar;
  return Tensor({static_cast<int>(s.size()), 1}, std::vector<double>(s.begin(), s.end()));
}

// ---------------------------------------------------------------------------
// FEM verification

struct FemReport {
  Grid vm;
  std::vector<double> vm_diag;
  double vm_max = 0.0;
  double compliance = 0.0;
};

/// Half-MBB solve on a density grid with penalized moduli (no thresholding).
inline FemReport fem_verify(const Grid& x, const topopt::SimpConfig& simp = {}) {
  if (x.rows < 1 || x.cols < 1) throw ContractError("fem_verify: empty grid");
  const fem::Mesh mesh = fem::Mesh::half_mbb(x.cols, x.rows);
  const auto young = topopt::penalize(x.values, simp);
  const Eigen::VectorXd u = fem::assemble_and_solve(mesh, young);
  FemReport r;
  r.vm = fem::von_mises_field(mesh, u, young).grid;
  r.vm_diag = r.vm.diagonal();
  r.vm_max = r.vm.max();
  r.compliance = fem::compliance(mesh, u);
  return r;
}

/// ‖a - b‖ / ‖a‖.
inline double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ContractError("relative_l2: length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  if (den == 0.0) throw ContractError("relative_l2: reference has zero norm");
  return std::sqrt(num / den);
}

// ---------------------------------------------------------------------------
// Latent interpolation

inline Eigen::RowVectorXd latent_interpolate(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b, double t) {
  if (a.size() != b.size())
    throw ContractError("latent_interpolate: endpoints have " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()) + " coefficients");
  if (!(t >= 0.0 && t <= 1.0))
    throw ContractError("latent_interpolate: t = " + std::to_string(t) + " outside [0, 1]");
  return (1.0 - t) * a + t * b;
}

/// New 1-d target: the solution decoder applied to a blend of the latent
/// coefficients of training samples i and j.
inline std::vector<double> interpolated_curve(const RraeModel& sol, int i, int j, double t) {
  const Eigen::MatrixXd& B = sol.train_coefficients();
  if (i < 0 || j < 0 || i >= B.cols() || j >= B.cols())
    throw ContractError("sample indices must lie in [0, " + std::to_string(B.cols()) + ")");
  const Eigen::RowVectorXd beta = latent_interpolate(B.col(i).transpose(), B.col(j).transpose(), t);
  const Tensor curve = sol.decode(RowMat(beta));
  return {curve.data.begin(), curve.data.end()};
}

// ---------------------------------------------------------------------------
// Pipeline

struct InverseResult {
  Tensor x;                        // (n, 1, rows, cols), clamped to [0, 1]
  RowMat alpha;                    // (n, k_geometry)
  std::vector<bool> out_of_range;  // per request
  bool clamped = false;            // any value was moved into [0, 1]
};

struct Roundtrip {
  Grid x;
  std::vector<double> s_fem;
  double discrepancy = std::numeric_limits<double>::quiet_NaN();
  bool out_of_range = false;
};

class Pipeline {
 public:
  /// `solution` is null for the scalar QoI; either map may be null when only
  /// one direction is needed.
  Pipeline(Qoi qoi, std::shared_ptr<const RraeModel> geometry, std::shared_ptr<const RraeModel> solution,
           std::shared_ptr<const LatentMap> direct, std::shared_ptr<const LatentMap> inverse,
           topopt::SimpConfig simp = {})
      : qoi_(qoi),
        geo_(std::move(geometry)),
        sol_(std::move(solution)),
        direct_(std::move(direct)),
        inverse_(std::move(inverse)),
        simp_(simp) {
    if (!geo_ || !geo_->trained()) throw ConfigError("pipeline needs a trained geometry autoencoder");
    if (geo_->kind() != rrae::Kind::geometry) throw ConfigError("first model is not a geometry autoencoder");
    if (qoi_ == Qoi::scalar) {
      if (sol_) throw ConfigError("scalar pipeline takes no solution autoencoder");
    } else {
      if (!sol_ || !sol_->trained()) throw ConfigError("field pipeline needs a trained solution autoencoder");
      if (sol_->kind() != solution_kind(qoi_))
        throw ConfigError("solution autoencoder is " + rrae::kind_name(sol_->kind()) + ", QoI needs " +
                          rrae::kind_name(solution_kind(qoi_)));
    }
    const int ka = geo_->kmax(), kb = solution_dim();
    if (direct_ && (direct_->in_dim() != ka || direct_->out_dim() != kb))
      throw ConfigError("direct map is " + dims(*direct_) + ", pipeline needs " + std::to_string(ka) + " -> " +
                        std::to_string(kb));
    if (inverse_ && (inverse_->in_dim() != kb || inverse_->out_dim() != ka))
      throw ConfigError("inverse map is " + dims(*inverse_) + ", pipeline needs " + std::to_string(kb) + " -> " +
                        std::to_string(ka));
  }

  Qoi qoi() const { return qoi_; }
  const RraeModel& geometry() const { return *geo_; }
  const RraeModel* solution() const { return sol_.get(); }
  const LatentMap* direct_map() const { return direct_.get(); }
  const LatentMap* inverse_map() const { return inverse_.get(); }
  const topopt::SimpConfig& simp() const { return simp_; }

  /// Latent width on the solution side (1 for the scalar QoI).
  int solution_dim() const { return qoi_ == Qoi::scalar ? 1 : sol_->kmax(); }
  nn::Shape qoi_shape() const { return qoi_ == Qoi::scalar ? nn::Shape{1} : sol_->sample_shape(); }

  /// Geometry coefficients alpha (n x k) for geometry grids.
  RowMat encode_geometry(const Tensor& x) const { return geo_->encode_project(x); }

  /// Solution-side coordinates (n x k_s): beta, or the scalar itself.
  RowMat encode_solution(const Tensor& s) const {
    check_qoi(s, "encode_solution");
    if (qoi_ == Qoi::scalar) return s.matrix();
    return sol_->encode_project(s);
  }

  Tensor decode_solution(const RowMat& beta) const {
    if (qoi_ == Qoi::scalar) return Tensor::from_matrix(beta);
    return sol_->decode(beta);
  }

  /// Decoded geometry grids clamped to [0, 1].
  Tensor decode_geometry(const RowMat& alpha, bool* clamped = nullptr) const {
    Tensor x = geo_->decode(alpha);
    bool any = false;
    for (double& v : x.data) {
      const double c = std::clamp(v, 0.0, 1.0);
      any |= c != v;
      v = c;
    }
    if (clamped) *clamped = any;
    return x;
  }

  Tensor geo2sol(const Tensor& x) const {
    if (!direct_) throw StateError("pipeline has no direct map");
    if (x.sample_shape() != geo_->sample_shape())
      throw ContractError("geo2sol: expected geometries of shape " + nn::to_string(geo_->sample_shape()) +
                          ", got " + nn::to_string(x.sample_shape()));
    return decode_solution(direct_->predict(encode_geometry(x)));
  }

  InverseResult sol2geo(const Tensor& s) const {
    if (!inverse_) throw StateError("pipeline has no inverse map");
    const RowMat beta = encode_solution(s);
    InverseResult r;
    r.alpha = inverse_->predict(beta);
    r.x = decode_geometry(r.alpha, &r.clamped);
    r.out_of_range.resize(s.batch());
    for (int j = 0; j < s.batch(); ++j) {
      const double* p = s.sample(j);
      const bool zero = std::all_of(p, p + s.sample_size(), [](double v) { return v == 0.0; });
      r.out_of_range[j] = zero || inverse_->out_of_range(beta.row(j));
    }
    return r;
  }

  /// sol2geo on one diagonal curve, then a FEM solve of the produced
  /// geometry; no solve when the request is out of range.
  Roundtrip roundtrip_verify(const std::vector<double>& s_new) const {
    if (qoi_ != Qoi::d1) throw ContractError("roundtrip_verify needs the 1d pipeline");
    const Tensor s({1, static_cast<int>(s_new.size())}, s_new);
    const InverseResult inv = sol2geo(s);
    Roundtrip r;
    r.x = Grid(geo_->sample_shape()[1], geo_->sample_shape()[2],
               std::vector<double>(inv.x.data.begin(), inv.x.data.end()));
    r.out_of_range = inv.out_of_range[0];
    if (r.out_of_range) return r;
    r.s_fem = fem_verify(r.x, simp_).vm_diag;
    r.discrepancy = relative_l2(s_new, r.s_fem);
    return r;
  }

 private:
  static std::string dims(const LatentMap& m) {
    return std::to_string(m.in_dim()) + " -> " + std::to_string(m.out_dim());
  }
  void check_qoi(const Tensor& s, const char* op) const {
    if (s.sample_shape() != qoi_shape())
      throw ContractError(std::string(op) + ": expected " + latentmap::qoi_name(qoi_) + " samples of shape " +
                          nn::to_string(qoi_shape()) + ", got " + nn::to_string(s.sample_shape()));
  }

  Qoi qoi_;
  std::shared_ptr<const RraeModel> geo_, sol_;
  std::shared_ptr<const LatentMap> direct_, inverse_;
  topopt::SimpConfig simp_;
};

// ---------------------------------------------------------------------------
// Map training data and evaluation

/// Aligned (alpha, beta) rows for one split; beta is the scalar QoI itself
/// when `solution` is null.
struct LatentPairs {
  RowMat alpha;
  RowMat beta;
};

inline LatentPairs latent_pairs(const RraeModel& geometry, const RraeModel* solution, const dataset::DatasetBundle& b,
                                Qoi q, const std::string& split) {
  LatentPairs p;
  p.alpha = geometry.encode_project(rrae::training_data(b, rrae::Kind::geometry, split));
  if (q == Qoi::scalar) {
    p.beta = qoi_data(b, q, split).matrix();
  } else {
    if (!solution) throw ContractError("latent_pairs: field QoI needs a solution autoencoder");
    p.beta = solution->encode_project(rrae::training_data(b, solution_kind(q), split));
  }
  return p;
}

struct DirectMetrics {
  double r2 = 0.0;    // scalar: R^2 over samples; 1d: mean per-sample R^2; 2d: per-sample mean
  double loss = 0.0;  // relative Frobenius error over the split
};

struct InverseMetrics {
  double loss = 0.0;                    // relative Frobenius geometry error over the split
  double max_volume_fraction_gap = 0.0;  // max_j |mean(x~_j) - mean(x_j)|
  int out_of_range = 0;
};

inline DirectMetrics evaluate_direct(const Pipeline& p, const dataset::DatasetBundle& b, const std::string& split,
                                     Tensor* predictions = nullptr) {
  const Tensor truth = qoi_data(b, p.qoi(), split);
  const Tensor pred = p.geo2sol(rrae::training_data(b, rrae::Kind::geometry, split));
  DirectMetrics m;
  m.loss = rrae::relative_error(truth, pred);
  const RowMat t = truth.matrix(), y = pred.matrix();
  m.r2 = p.qoi() == Qoi::scalar ? latentmap::r_squared(t, y) : latentmap::r_squared_per_sample(t, y);
  if (predictions) *predictions = pred;
  return m;
}

inline InverseMetrics evaluate_inverse(const Pipeline& p, const dataset::DatasetBundle& b, const std::string& split,
                                       Tensor* predictions = nullptr) {
  const Tensor truth = rrae::training_data(b, rrae::Kind::geometry, split);
  const InverseResult r = p.sol2geo(qoi_data(b, p.qoi(), split));
  InverseMetrics m;
  m.loss = rrae::relative_error(truth, r.x);
  const std::size_t n = truth.sample_size();
  for (int j = 0; j < truth.batch(); ++j) {
    double a = 0.0, c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a += truth.sample(j)[i];
      c += r.x.sample(j)[i];
    }
    m.max_volume_fraction_gap = std::max(m.max_volume_fraction_gap, std::abs(a - c) / static_cast<double>(n));
    m.out_of_range += r.out_of_range[j] ? 1 : 0;
  }
  if (predictions) *predictions = r.x;
  return m;
}

// ---------------------------------------------------------------------------
// Model directory layout
//
//   <dir>/geometry, <dir>/sol1d, <dir>/sol2d        autoencoder checkpoints
//   <dir>/map_<qoi>_<d|i>                           latent map checkpoints

inline std::string map_dir_name(Qoi q, Direction d) {
  return "map_" + latentmap::qoi_name(q) + "_" + latentmap::direction_name(d);
}

/// SIMP settings recorded with the geometry checkpoint, defaults otherwise.
inline topopt::SimpConfig simp_of(const RraeModel& geometry) {
  const json& meta = geometry.metadata();
  if (meta.contains("simp")) return meta.at("simp").get<topopt::SimpConfig>();
  return {};
}

struct ModelSet {
  std::shared_ptr<const RraeModel> geometry, sol1d, sol2d;
  std::map<std::pair<Qoi, Direction>, std::shared_ptr<const LatentMap>> maps;

  static ModelSet load(const std::filesystem::path& dir) {
    ModelSet s;
    auto rrae_at = [&](const char* name) -> std::shared_ptr<const RraeModel> {
      if (!std::filesystem::exists(dir / name / "model.json")) return nullptr;
      return std::make_shared<const RraeModel>(RraeModel::load(dir / name));
    };
    s.geometry = rrae_at("geometry");
    s.sol1d = rrae_at("sol1d");
    s.sol2d = rrae_at("sol2d");
    for (Qoi q : {Qoi::scalar, Qoi::d1, Qoi::d2})
      for (Direction d : {Direction::direct, Direction::inverse}) {
        const auto p = dir / map_dir_name(q, d);
        if (std::filesystem::exists(p / "map.json")) s.maps[{q, d}] = std::make_shared<const LatentMap>(LatentMap::load(p));
      }
    return s;
  }

  std::shared_ptr<const LatentMap> map(Qoi q, Direction d) const {
    const auto it = maps.find({q, d});
    return it == maps.end() ? nullptr : it->second;
  }

  /// Pipeline for one QoI with whatever maps are present; nullopt when the
  /// autoencoders it needs are missing.
  std::optional<Pipeline> pipeline(Qoi q) const {
    if (!geometry) return std::nullopt;
    std::shared_ptr<const RraeModel> sol = q == Qoi::d1 ? sol1d : q == Qoi::d2 ? sol2d : nullptr;
    if (q != Qoi::scalar && !sol) return std::nullopt;
    auto d = map(q, Direction::direct), i = map(q, Direction::inverse);
    if (!d && !i) return std::nullopt;
    return Pipeline(q, geometry, sol, d, i, simp_of(*geometry));
  }
};

}  // namespace rrto::pipelines
