#pragma once

// Small regressors between latent coefficient spaces (and the scalar QoI),
// with standard scaling on both sides.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "rrto/error.hpp"
#include "rrto/io.hpp"
#include "rrto/nn.hpp"

namespace rrto::latentmap {

using json = nlohmann::json;
using nn::RowMat;

inline constexpr int kCheckpointVersion = 1;

enum class Direction { direct, inverse };
enum class Qoi { scalar, d1, d2 };

inline std::string direction_name(Direction d) { return d == Direction::direct ? "d" : "i"; }
inline Direction parse_direction(const std::string& s) {
  if (s == "d" || s == "direct") return Direction::direct;
  if (s == "i" || s == "inverse") return Direction::inverse;
  throw ConfigError("unknown direction '" + s + "' (expected d or i)");
}

inline std::string qoi_name(Qoi q) {
  switch (q) {
    case Qoi::scalar: return "s";
    case Qoi::d1: return "1d";
    case Qoi::d2: return "2d";
  }
  return "?";
}
inline Qoi parse_qoi(const std::string& s) {
  if (s == "s" || s == "scalar") return Qoi::scalar;
  if (s == "1d") return Qoi::d1;
  if (s == "2d") return Qoi::d2;
  throw ConfigError("unknown qoi '" + s + "' (expected s, 1d or 2d)");
}

// ---------------------------------------------------------------------------
// Coefficient of determination

/// 1 - SS_res / SS_tot for one output.
inline double r_squared(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.size() != pred.size()) throw ContractError("r_squared: length mismatch");
  if (truth.size() < 2) throw ContractError("r_squared: need at least two values");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (!(ss_tot > 0.0)) throw ContractError("r_squared: true values have zero variance");
  return 1.0 - ss_res / ss_tot;
}

/// Uniform average over output columns.
inline double r_squared(const RowMat& truth, const RowMat& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw ContractError("r_squared: shape mismatch");
  double s = 0.0;
  for (Eigen::Index c = 0; c < truth.cols(); ++c) {
    std::vector<double> t(truth.rows()), p(truth.rows());
    for (Eigen::Index r = 0; r < truth.rows(); ++r) {
      t[r] = truth(r, c);
      p[r] = pred(r, c);
    }
    s += r_squared(t, p);
  }
  return s / static_cast<double>(truth.cols());
}

/// For curve sets: R^2 of each row (sample) against itself, then averaged.
inline double r_squared_per_sample(const RowMat& truth, const RowMat& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw ContractError("r_squared_per_sample: shape mismatch");
  if (truth.rows() < 1) throw ContractError("r_squared_per_sample: no samples");
  double s = 0.0;
  for (Eigen::Index r = 0; r < truth.rows(); ++r) {
    const Eigen::RowVectorXd t = truth.row(r), p = pred.row(r);
    s += r_squared(std::vector<double>(t.data(), t.data() + t.size()),
                   std::vector<double>(p.data(), p.data() + p.size()));
  }
  return s / static_cast<double>(truth.rows());
}

// ---------------------------------------------------------------------------
// Map

struct MapTrainConfig {
  int epochs = 3000;
  int batch_size = 100;
  double learning_rate = 1e-3;
  std::string optimizer = "nadam";
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0 || batch_size < 1 || !(learning_rate > 0.0))
      throw ConfigError("map training: epochs, batch size and learning rate must be positive");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
      throw ConfigError("map training: validation fraction must lie in [0, 1)");
    nn::parse_opt(optimizer);
  }
};

inline void to_json(json& j, const MapTrainConfig& c) {
  j = json{{"epochs", c.epochs},       {"batch_size", c.batch_size},
           {"learning_rate", c.learning_rate}, {"optimizer", c.optimizer},
           {"validation_fraction", c.validation_fraction}, {"seed", c.seed}};
}
inline void from_json(const json& j, MapTrainConfig& c) {
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("optimizer").get_to(c.optimizer);
  j.at("validation_fraction").get_to(c.validation_fraction);
  j.at("seed").get_to(c.seed);
}

/// One (true, predicted) pair of the fitting-curve export.
struct PredictionRow {
  int sample_id;
  std::string split;
  std::string target_name;
  double truth;
  double predicted;
};

struct FitReport {
  double mse_train = 0.0;  // scaled units, training subset
  double r2_train = 0.0;
  double r2_validation = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> train_ids, validation_ids;
  std::vector<PredictionRow> predictions;

  json to_json() const {
    return {{"mse_train", mse_train},
            {"r2_train", r2_train},
            {"r2_validation", std::isfinite(r2_validation) ? json(r2_validation) : json(nullptr)},
            {"train_ids", train_ids},
            {"validation_ids", validation_ids}};
  }
};

class LatentMap {
 public:
  LatentMap() = default;
  LatentMap(int in_dim, int out_dim) : net_(nn::latent_mlp(in_dim, out_dim)), in_dim_(in_dim), out_dim_(out_dim) {}

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }
  bool trained() const { return in_scaler_.fitted() && out_scaler_.fitted(); }
  const nn::StandardScaler& input_scaler() const { return in_scaler_; }
  const nn::StandardScaler& output_scaler() const { return out_scaler_; }
  const nn::Network& network() const { return net_; }
  /// Per-input-column [min, max] over every sample seen in training.
  const std::vector<std::pair<double, double>>& input_range() const { return range_; }
  json& metadata() { return meta_; }
  const json& metadata() const { return meta_; }

  /// True when any input column lies outside the training range.
  bool out_of_range(const Eigen::RowVectorXd& x) const {
    for (Eigen::Index c = 0; c < x.size(); ++c)
      if (x(c) < range_[c].first || x(c) > range_[c].second) return true;
    return false;
  }

  RowMat predict(const RowMat& x) const {
    if (!trained()) throw StateError("LatentMap::predict on an untrained map");
    if (x.cols() != in_dim_)
      throw ContractError("LatentMap::predict: expected " + std::to_string(in_dim_) + " input columns, got " +
                          std::to_string(x.cols()));
    const nn::Tensor z = net_.forward(nn::Tensor::from_matrix(in_scaler_.transform(x)));
    return out_scaler_.inverse(RowMat(z.matrix()));
  }

  FitReport fit(const RowMat& inputs, const RowMat& targets, const MapTrainConfig& cfg,
                const std::vector<std::string>& target_names = {}) {
    cfg.validate();
    const int n = static_cast<int>(inputs.rows());
    if (n < 5) throw ConfigError("map training needs at least 5 samples, got " + std::to_string(n));
    if (targets.rows() != n) throw ContractError("map training: inputs and targets are not aligned");
    if (inputs.cols() != in_dim_ || targets.cols() != out_dim_)
      throw ContractError("map training: dimensions do not match the map");

    range_.assign(in_dim_, {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()});
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < in_dim_; ++c) {
        range_[c].first = std::min(range_[c].first, inputs(r, c));
        range_[c].second = std::max(range_[c].second, inputs(r, c));
      }

    // Deterministic split.
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const int n_val = static_cast<int>(std::floor(cfg.validation_fraction * n));
    FitReport rep;
    rep.train_ids.assign(ids.begin(), ids.end() - n_val);
    rep.validation_ids.assign(ids.end() - n_val, ids.end());
    std::sort(rep.train_ids.begin(), rep.train_ids.end());
    std::sort(rep.validation_ids.begin(), rep.validation_ids.end());

    const RowMat xin = rows(inputs, rep.train_ids), yin = rows(targets, rep.train_ids);
    in_scaler_.fit(xin);
    out_scaler_.fit(yin);
    const nn::Tensor xs = nn::Tensor::from_matrix(in_scaler_.transform(xin));
    const nn::Tensor ys = nn::Tensor::from_matrix(out_scaler_.transform(yin));

    net_.initialize(cfg.seed + 1);
    nn::Optimizer opt(nn::parse_opt(cfg.optimizer), cfg.learning_rate);
    const int m = xs.batch();
    std::vector<int> order(m);
    json history = json::array();
    for (int ep = 0; ep < cfg.epochs; ++ep) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      double sum = 0.0;
      int nb = 0;
      for (int b = 0; b < m; b += cfg.batch_size, ++nb) {
        const std::vector<int> idx(order.begin() + b, order.begin() + std::min(m, b + cfg.batch_size));
        net_.zero_grad();
        const auto l = nn::mse(net_.forward_train(xs.gather(idx)), ys.gather(idx));
        if (!std::isfinite(l.value))
          throw DivergenceError("map training: loss is not finite at epoch " + std::to_string(ep));
        net_.backward(l.grad);
        opt.step(net_.params());
        sum += l.value;
      }
      if (ep % 100 == 0 || ep + 1 == cfg.epochs) history.push_back({ep, sum / nb});
    }

    rep.mse_train = nn::mse(net_.forward(xs), ys).value;
    const RowMat ptrain = predict(xin);
    rep.r2_train = r_squared(yin, ptrain);
    append_rows(rep.predictions, rep.train_ids, "train", yin, ptrain, target_names);
    if (n_val >= 2) {
      const RowMat yv = rows(targets, rep.validation_ids);
      const RowMat pv = predict(rows(inputs, rep.validation_ids));
      rep.r2_validation = r_squared(yv, pv);
      append_rows(rep.predictions, rep.validation_ids, "validation", yv, pv, target_names);
    }
    meta_["train_config"] = cfg;
    meta_["history"] = history;
    meta_["report"] = rep.to_json();
    return rep;
  }

  static void append_rows(std::vector<PredictionRow>& out, const std::vector<int>& ids, const std::string& split,
                          const RowMat& truth, const RowMat& pred, const std::vector<std::string>& names) {
    for (std::size_t r = 0; r < ids.size(); ++r)
      for (Eigen::Index c = 0; c < truth.cols(); ++c)
        out.push_back({ids[r], split,
                       c < static_cast<Eigen::Index>(names.size()) ? names[c] : "y" + std::to_string(c),
                       truth(r, c), pred(r, c)});
  }

  void save(const std::filesystem::path& dir) const {
    if (!trained()) throw StateError("LatentMap::save on an untrained map");
    std::filesystem::create_directories(dir);
    auto p = net_.flat_params();
    io::write_array(dir / "network.rrto", io::Array{{p.size()}, std::move(p)});
    json ranges = json::array();
    for (const auto& [lo, hi] : range_) ranges.push_back({lo, hi});
    json j{{"format", "rrto-latentmap"},
           {"version", kCheckpointVersion},
           {"in_dim", in_dim_},
           {"out_dim", out_dim_},
           {"network", net_.graph()},
           {"input_scaler", in_scaler_.to_json()},
           {"output_scaler", out_scaler_.to_json()},
           {"input_range", ranges},
           {"metadata", meta_}};
    io::write_text(dir / "map.json", j.dump(1) + "\n");
  }

  static LatentMap load(const std::filesystem::path& dir) {
    json j;
    try {
      j = json::parse(io::read_text(dir / "map.json"));
    } catch (const json::exception& e) {
      throw FormatError((dir / "map.json").string() + ": " + e.what());
    }
    if (j.value("format", "") != "rrto-latentmap") throw FormatError(dir.string() + ": not a latent map checkpoint");
    if (j.value("version", -1) != kCheckpointVersion)
      throw FormatError(dir.string() + ": unsupported checkpoint version " + j.value("version", json(-1)).dump());
    LatentMap m;
    try {
      m.in_dim_ = j.at("in_dim").get<int>();
      m.out_dim_ = j.at("out_dim").get<int>();
      m.net_ = nn::Network::from_graph(j.at("network"));
      m.in_scaler_ = nn::StandardScaler::from_json(j.at("input_scaler"));
      m.out_scaler_ = nn::StandardScaler::from_json(j.at("output_scaler"));
      for (const auto& r : j.at("input_range")) m.range_.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
      m.meta_ = j.at("metadata");
    } catch (const json::exception& e) {
      throw FormatError(dir.string() + ": " + e.what());
    }
    m.net_.set_flat_params(io::read_array(dir / "network.rrto").data);
    return m;
  }

 private:
  static RowMat rows(const RowMat& m, const std::vector<int>& ids) {
    RowMat out(static_cast<Eigen::Index>(ids.size()), m.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) out.row(i) = m.row(ids[i]);
    return out;
  }

  nn::Network net_;
  int in_dim_ = 0, out_dim_ = 0;
  nn::StandardScaler in_scaler_, out_scaler_;
  std::vector<std::pair<double, double>> range_;
  json meta_ = json::object();
};

// ---------------------------------------------------------------------------
// Fitting-curve export

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_fit_csv(const std::filesystem::path& path, const std::vector<PredictionRow>& rows) {
  std::ostringstream os;
  os << "sample_id,split,target_name,true,predicted\n";
  for (const auto& r : rows)
    os << r.sample_id << ',' << r.split << ',' << r.target_name << ',' << format_double(r.truth) << ','
       << format_double(r.predicted) << '\n';
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  io::write_text(path, os.str());
}

}  // namespace rrto::latentmap
