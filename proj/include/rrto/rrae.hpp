#pragma once

// Rank Reduction Autoencoder: encoder, rank-k_max projection of the latent
// batch onto its leading left singular vectors, decoder.

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rrto/dataset.hpp"
#include "rrto/error.hpp"
#include "rrto/io.hpp"
#include "rrto/nn.hpp"
#include "rrto/svd.hpp"

namespace rrto::rrae {

using json = nlohmann::json;
using nn::RowMat;
using nn::Tensor;

inline constexpr int kCheckpointVersion = 1;

enum class Kind { geometry, sol1d, sol2d };
enum class Flavor { cnn, mlp };

inline std::string kind_name(Kind k) {
  switch (k) {
    case Kind::geometry: return "geometry";
    case Kind::sol1d: return "sol1d";
    case Kind::sol2d: return "sol2d";
  }
  return "?";
}

inline Kind parse_kind(const std::string& s) {
  if (s == "geometry") return Kind::geometry;
  if (s == "sol1d") return Kind::sol1d;
  if (s == "sol2d") return Kind::sol2d;
  throw ConfigError("unknown model kind '" + s + "' (expected geometry, sol1d or sol2d)");
}

inline Flavor flavor_of(Kind k) { return k == Kind::sol1d ? Flavor::mlp : Flavor::cnn; }

struct Stage {
  double learning_rate;
  int epochs;
  int batch_size;
};

struct TrainSchedule {
  std::vector<Stage> stages{{1e-3, 3500, 20}, {1e-4, 3500, 20}, {1e-5, 3500, 20}};
  std::string optimizer = "adabelief";

  /// Epoch counts multiplied by `factor` (at least one epoch per stage).
  TrainSchedule scaled(double factor) const {
    if (!(factor > 0.0)) throw ConfigError("stages scale must be positive");
    TrainSchedule s = *this;
    for (auto& st : s.stages) st.epochs = std::max(1, static_cast<int>(std::lround(st.epochs * factor)));
    return s;
  }

  void validate(int kmax) const {
    if (stages.empty()) throw ConfigError("schedule has no stages");
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const Stage& s = stages[i];
      if (!(s.learning_rate > 0.0) || s.epochs < 0)
        throw ConfigError("stage " + std::to_string(i) + ": invalid learning rate or epochs");
      if (s.batch_size < kmax)
        throw ConfigError("stage " + std::to_string(i) + ": batch size " + std::to_string(s.batch_size) +
                          " is below k_max = " + std::to_string(kmax));
      if (i > 0 && !(s.learning_rate < stages[i - 1].learning_rate))
        throw ConfigError("stage learning rates must strictly decrease");
    }
    nn::parse_opt(optimizer);
  }
};

inline void to_json(json& j, const Stage& s) {
  j = json{{"learning_rate", s.learning_rate}, {"epochs", s.epochs}, {"batch_size", s.batch_size}};
}
inline void from_json(const json& j, Stage& s) {
  j.at("learning_rate").get_to(s.learning_rate);
  j.at("epochs").get_to(s.epochs);
  j.at("batch_size").get_to(s.batch_size);
}
inline void to_json(json& j, const TrainSchedule& s) {
  j = json{{"stages", s.stages}, {"optimizer", s.optimizer}};
}
inline void from_json(const json& j, TrainSchedule& s) {
  j.at("stages").get_to(s.stages);
  j.at("optimizer").get_to(s.optimizer);
}

struct RraeConfig {
  Kind kind = Kind::geometry;
  int latent = 500;
  int kmax = 2;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
  // Channel widths for the CNN flavor and hidden width/depth for the MLP
  // flavor; input sizes come from the data.
  std::array<int, 3> cnn_channels{32, 64, 128};
  int cnn_bottleneck = 32;
  int mlp_width = 64;
  int mlp_decoder_hidden = 6;

  static RraeConfig defaults(Kind k) {
    RraeConfig c;
    c.kind = k;
    c.kmax = k == Kind::geometry ? 2 : 1;
    return c;
  }
};

inline void to_json(json& j, const RraeConfig& c) {
  j = json{{"kind", kind_name(c.kind)},
           {"latent", c.latent},
           {"kmax", c.kmax},
           {"schedule", c.schedule},
           {"seed", c.seed},
           {"cnn_channels", c.cnn_channels},
           {"cnn_bottleneck", c.cnn_bottleneck},
           {"mlp_width", c.mlp_width},
           {"mlp_decoder_hidden", c.mlp_decoder_hidden}};
}
inline void from_json(const json& j, RraeConfig& c) {
  c.kind = parse_kind(j.at("kind").get<std::string>());
  j.at("latent").get_to(c.latent);
  j.at("kmax").get_to(c.kmax);
  j.at("schedule").get_to(c.schedule);
  j.at("seed").get_to(c.seed);
  j.at("cnn_channels").get_to(c.cnn_channels);
  j.at("cnn_bottleneck").get_to(c.cnn_bottleneck);
  j.at("mlp_width").get_to(c.mlp_width);
  j.at("mlp_decoder_hidden").get_to(c.mlp_decoder_hidden);
}

// ---------------------------------------------------------------------------
// Data

/// Model input for one split: (n, 1, rows, cols) grids or (n, features) rows.
inline Tensor training_data(const dataset::DatasetBundle& b, Kind kind, const std::string& split) {
  const dataset::SplitData& s = b.split(split);
  const int n = static_cast<int>(s.size());
  if (kind == Kind::sol1d) {
    const int w = n ? static_cast<int>(s.s_1d[0].size()) : std::min(b.rows(), b.cols());
    Tensor t({n, w});
    for (int j = 0; j < n; ++j) std::copy(s.s_1d[j].begin(), s.s_1d[j].end(), t.sample(j));
    return t;
  }
  const auto& grids = kind == Kind::geometry ? s.X : s.s_2d;
  Tensor t({n, 1, b.rows(), b.cols()});
  for (int j = 0; j < n; ++j) std::copy(grids[j].values.begin(), grids[j].values.end(), t.sample(j));
  return t;
}

/// Relative Frobenius error ‖truth - approx‖ / ‖truth‖ over the whole set.
inline double relative_error(const Tensor& truth, const Tensor& approx) {
  return nn::relative_frobenius(approx, truth).value;
}

/// Per-sample relative L2 errors.
inline std::vector<double> per_sample_errors(const Tensor& truth, const Tensor& approx) {
  nn::check_same(truth, approx, "per_sample_errors");
  std::vector<double> out(truth.batch());
  const std::size_t n = truth.sample_size();
  for (int j = 0; j < truth.batch(); ++j) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = truth.sample(j)[i];
      num += (approx.sample(j)[i] - t) * (approx.sample(j)[i] - t);
      den += t * t;
    }
    out[j] = std::sqrt(num / den);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model

struct EpochInfo {
  int stage;
  int epoch;
  double learning_rate;
  double mean_batch_loss;
  double seconds;
};
using EpochCallback = std::function<void(const EpochInfo&)>;

class RraeModel {
 public:
  RraeModel() = default;

  /// Fresh, initialized model for samples of the given per-sample shape.
  RraeModel(const RraeConfig& cfg, const nn::Shape& sample_shape) : cfg_(cfg), sample_shape_(sample_shape) {
    if (cfg.kmax < 1 || cfg.kmax > cfg.latent) throw ConfigError("require 1 <= k_max <= latent size");
    cfg.schedule.validate(cfg.kmax);
    if (flavor() == Flavor::mlp) {
      if (sample_shape.size() != 1) throw ConfigError("MLP autoencoder expects vector samples");
      nn::MlpSpec s{sample_shape[0], cfg.latent, cfg.mlp_width, cfg.mlp_decoder_hidden};
      encoder_ = nn::mlp_encoder(s);
      decoder_ = nn::mlp_decoder(s);
    } else {
      if (sample_shape.size() != 3 || sample_shape[0] != 1 || sample_shape[1] != sample_shape[2])
        throw ConfigError("CNN autoencoder expects square single-channel grids, got " +
                          nn::to_string(sample_shape));
      nn::CnnSpec s{sample_shape[1], cfg.latent, cfg.cnn_channels, cfg.cnn_bottleneck};
      encoder_ = nn::cnn_encoder(s);
      decoder_ = nn::cnn_decoder(s);
    }
    encoder_.initialize(cfg.seed * 2 + 1);
    decoder_.initialize(cfg.seed * 2 + 2);
  }

  /// Model with caller-supplied networks (latent width must equal cfg.latent).
  RraeModel(const RraeConfig& cfg, const nn::Shape& sample_shape, nn::Network encoder, nn::Network decoder)
      : cfg_(cfg), sample_shape_(sample_shape), encoder_(std::move(encoder)), decoder_(std::move(decoder)) {
    if (cfg.kmax < 1 || cfg.kmax > cfg.latent) throw ConfigError("require 1 <= k_max <= latent size");
    if (encoder_.input_shape() != sample_shape || encoder_.output_shape() != nn::Shape{cfg.latent} ||
        decoder_.input_shape() != nn::Shape{cfg.latent} || decoder_.output_shape() != sample_shape)
      throw ConfigError("encoder/decoder shapes do not match the sample shape and latent size");
  }

  const RraeConfig& config() const { return cfg_; }
  Kind kind() const { return cfg_.kind; }
  Flavor flavor() const { return flavor_of(cfg_.kind); }
  int latent() const { return cfg_.latent; }
  int kmax() const { return cfg_.kmax; }
  const nn::Shape& sample_shape() const { return sample_shape_; }
  bool trained() const { return trained_; }
  double data_scale() const { return scale_; }
  const Eigen::MatrixXd& basis() const { return U_; }
  /// Train-set coefficients (k_max x n_train) from the final basis refresh.
  const Eigen::MatrixXd& train_coefficients() const { return A_train_; }
  const json& metadata() const { return meta_; }
  json& metadata() { return meta_; }
  const nn::Network& encoder() const { return encoder_; }
  const nn::Network& decoder() const { return decoder_; }

  /// Latent rows (n x L) for raw (unscaled) inputs.
  RowMat encode_latent(const Tensor& x) const {
    check_sample(x);
    RowMat y(x.batch(), cfg_.latent);
    for (int b = 0; b < x.batch(); b += kChunk) {
      const int e = std::min(x.batch(), b + kChunk);
      Tensor xs = x.slice(b, e);
      for (double& v : xs.data) v /= scale_;
      y.middleRows(b, e - b) = encoder_.forward(xs).matrix();
    }
    return y;
  }

  /// alpha_j = U^T E(x_j), returned as rows (n x k_max).
  RowMat encode_project(const Tensor& x) const {
    require_trained("encode_project");
    return encode_latent(x) * U_;
  }

  /// D(U alpha_j) in raw units for coefficient rows (n x k_max).
  Tensor decode(const RowMat& alpha) const {
    require_trained("decode");
    if (alpha.cols() != cfg_.kmax)
      throw ContractError("decode: coefficient dimension " + std::to_string(alpha.cols()) +
                          " != k_max = " + std::to_string(cfg_.kmax));
    return decode_latent(alpha * U_.transpose());
  }

  Tensor reconstruct(const Tensor& x) const { return decode(encode_project(x)); }

  /// Relative Frobenius reconstruction error over the whole set.
  double loss(const Tensor& x) const { return relative_error(x, reconstruct(x)); }

  /// Fits the data scale, basis and train coefficients to `x` with the
  /// current network weights.
  void calibrate(const Tensor& x) {
    check_sample(x);
    if (x.batch() < cfg_.kmax)
      throw ConfigError("n_s = " + std::to_string(x.batch()) + " is smaller than k_max = " +
                        std::to_string(cfg_.kmax));
    if (!std::all_of(x.data.begin(), x.data.end(), [](double v) { return std::isfinite(v); }))
      throw ConfigError("training data has non-finite entries");
    scale_ = 1.0;
    if (cfg_.kind != Kind::geometry) {
      scale_ = *std::max_element(x.data.begin(), x.data.end());
      if (!(scale_ > 0.0)) throw ConfigError("solution data has no positive entries to scale by");
    }
    A_train_ = refresh_basis(x);
    trained_ = true;
  }

  /// Sets U from the truncated SVD of the latent matrix of `x` and returns
  /// the coefficients Sigma V^T (k_max x n).
  Eigen::MatrixXd refresh_basis(const Tensor& x) {
    if (x.batch() < cfg_.kmax)
      throw ConfigError("need at least k_max = " + std::to_string(cfg_.kmax) + " samples, got " +
                        std::to_string(x.batch()));
    const Eigen::MatrixXd Y = encode_latent(x).transpose();
    TruncatedSvd svd = truncated_svd(Y, cfg_.kmax);
    U_ = std::move(svd.U);
    return svd.sigma.asDiagonal() * svd.Vt;
  }

  /// Staged training on raw inputs `x` (scaling is fitted here).
  void train(const Tensor& x, const EpochCallback& on_epoch = {}) {
    cfg_.schedule.validate(cfg_.kmax);
    calibrate(x);
    const int n = x.batch();
    Tensor xs = x;
    for (double& v : xs.data) v /= scale_;

    nn::Optimizer opt(nn::parse_opt(cfg_.schedule.optimizer));
    std::mt19937_64 rng(cfg_.seed);
    std::vector<int> order(n);
    json history = json::array(), stage_losses = json::array();

    for (std::size_t si = 0; si < cfg_.schedule.stages.size(); ++si) {
      const Stage& st = cfg_.schedule.stages[si];
      opt.set_learning_rate(st.learning_rate);
      for (int ep = 0; ep < st.epochs; ++ep) {
        const auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < n; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        const auto batches = batch_bounds(n, st.batch_size);
        for (const auto& [b0, b1] : batches) {
          const Tensor xb = xs.gather(std::vector<int>(order.begin() + b0, order.begin() + b1));
          const double l = step(xb, opt);
          if (!std::isfinite(l))
            throw DivergenceError("stage " + std::to_string(si) + ", epoch " + std::to_string(ep) +
                                  ": loss is not finite");
          sum += l;
        }
        const double mean = sum / static_cast<double>(batches.size());
        history.push_back({si, ep, mean});
        if (on_epoch)
          on_epoch({static_cast<int>(si), ep, st.learning_rate, mean,
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
      }
      // Nothing reads U during the epochs, so refreshing it only where it
      // is observed gives the same model as a refresh after every epoch.
      refresh_basis(x);
      stage_losses.push_back(loss(x));
    }
    A_train_ = refresh_basis(x);
    meta_["train_loss"] = stage_losses.empty() ? json(loss(x)) : stage_losses.back();
    meta_["stage_losses"] = stage_losses;
    meta_["history"] = history;
    meta_["n_train"] = n;
  }

  // -------------------------------------------------------------------------
  // Checkpoints: a directory with model.json and RRTO arrays.

  void save(const std::filesystem::path& dir) const {
    require_trained("save");
    std::filesystem::create_directories(dir);
    auto flat = [](const nn::Network& net) {
      auto p = net.flat_params();
      return io::Array{{p.size()}, std::move(p)};
    };
    io::write_array(dir / "encoder.rrto", flat(encoder_));
    io::write_array(dir / "decoder.rrto", flat(decoder_));
    io::write_array(dir / "basis.rrto", matrix_array(U_));
    io::write_array(dir / "coefficients.rrto", matrix_array(A_train_));
    json j;
    j["format"] = "rrto-rrae";
    j["version"] = kCheckpointVersion;
    j["config"] = cfg_;
    j["flavor"] = flavor() == Flavor::cnn ? "cnn" : "mlp";
    j["sample_shape"] = sample_shape_;
    j["data_scale"] = scale_;
    j["encoder"] = encoder_.graph();
    j["decoder"] = decoder_.graph();
    j["metadata"] = meta_;
    io::write_text(dir / "model.json", j.dump(1) + "\n");
  }

  static RraeModel load(const std::filesystem::path& dir) {
    json j;
    try {
      j = json::parse(io::read_text(dir / "model.json"));
    } catch (const json::exception& e) {
      throw FormatError((dir / "model.json").string() + ": " + e.what());
    }
    if (j.value("format", "") != "rrto-rrae") throw FormatError(dir.string() + ": not an RRAE checkpoint");
    if (j.value("version", -1) != kCheckpointVersion)
      throw FormatError(dir.string() + ": unsupported checkpoint version " + j.value("version", json(-1)).dump());
    RraeModel m;
    try {
      m.cfg_ = j.at("config").get<RraeConfig>();
      m.sample_shape_ = j.at("sample_shape").get<nn::Shape>();
      m.scale_ = j.at("data_scale").get<double>();
      m.encoder_ = nn::Network::from_graph(j.at("encoder"));
      m.decoder_ = nn::Network::from_graph(j.at("decoder"));
      m.meta_ = j.at("metadata");
    } catch (const json::exception& e) {
      throw FormatError(dir.string() + ": " + e.what());
    }
    m.encoder_.set_flat_params(io::read_array(dir / "encoder.rrto").data);
    m.decoder_.set_flat_params(io::read_array(dir / "decoder.rrto").data);
    m.U_ = array_matrix(io::read_array(dir / "basis.rrto"));
    m.A_train_ = array_matrix(io::read_array(dir / "coefficients.rrto"));
    if (m.U_.rows() != m.cfg_.latent || m.U_.cols() != m.cfg_.kmax)
      throw FormatError(dir.string() + ": basis shape does not match latent size and k_max");
    m.trained_ = true;
    return m;
  }

 private:
  static constexpr int kChunk = 20;

  static io::Array matrix_array(const Eigen::MatrixXd& m) {
    io::Array a{{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
    a.data.resize(m.size());
    Eigen::Map<RowMat>(a.data.data(), m.rows(), m.cols()) = m;
    return a;
  }
  static Eigen::MatrixXd array_matrix(const io::Array& a) {
    if (a.shape.size() != 2) throw FormatError("expected a 2-d array");
    return Eigen::Map<const RowMat>(a.data.data(), a.shape[0], a.shape[1]);
  }

  /// Batch boundaries; a tail smaller than k_max is merged into the previous batch.
  std::vector<std::pair<int, int>> batch_bounds(int n, int bs) const {
    std::vector<std::pair<int, int>> out;
    for (int b = 0; b < n; b += bs) out.emplace_back(b, std::min(n, b + bs));
    if (out.size() > 1 && out.back().second - out.back().first < cfg_.kmax) {
      out[out.size() - 2].second = n;
      out.pop_back();
    }
    return out;
  }

  /// One optimizer step on a scaled batch; returns the batch loss.
  double step(const Tensor& xb, nn::Optimizer& opt) {
    encoder_.zero_grad();
    decoder_.zero_grad();
    const Tensor y = encoder_.forward_train(xb);
    const Eigen::MatrixXd Yt = y.matrix().transpose();
    if (!Yt.allFinite()) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::MatrixXd U = truncated_svd(Yt, cfg_.kmax).U;
    const RowMat P = U * U.transpose();
    Tensor yp(y.shape);
    yp.matrix().noalias() = y.matrix() * P;
    const Tensor xr = decoder_.forward_train(yp);
    const auto l = nn::relative_frobenius(xr, xb);
    const Tensor gyp = decoder_.backward(l.grad);
    Tensor gy(y.shape);
    gy.matrix().noalias() = gyp.matrix() * P;
    encoder_.backward(gy);
    auto params = encoder_.params();
    for (nn::Param* p : decoder_.params()) params.push_back(p);
    opt.step(params);
    return l.value;
  }

  Tensor decode_latent(const RowMat& z) const {
    nn::Shape s{static_cast<int>(z.rows())};
    s.insert(s.end(), sample_shape_.begin(), sample_shape_.end());
    Tensor out(s);
    for (int b = 0; b < z.rows(); b += kChunk) {
      const int e = std::min(static_cast<int>(z.rows()), b + kChunk);
      const Tensor zb = Tensor::from_matrix(z.middleRows(b, e - b));
      const Tensor xb = decoder_.forward(zb);
      std::copy(xb.data.begin(), xb.data.end(), out.sample(b));
    }
    for (double& v : out.data) v *= scale_;
    return out;
  }

  void check_sample(const Tensor& x) const {
    if (x.sample_shape() != sample_shape_)
      throw ContractError("RRAE input: expected samples of shape " + nn::to_string(sample_shape_) + ", got " +
                          nn::to_string(x.sample_shape()));
  }
  void require_trained(const char* op) const {
    if (!trained_) throw StateError(std::string("RraeModel::") + op + " on an untrained model");
  }

  RraeConfig cfg_;
  nn::Shape sample_shape_;
  nn::Network encoder_, decoder_;
  Eigen::MatrixXd U_, A_train_;
  double scale_ = 1.0;
  bool trained_ = false;
  json meta_ = json::object();
};

}  // namespace rrto::rrae
