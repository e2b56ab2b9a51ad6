#pragma once

// Read-only HTTP facade over a loaded model set and the FEM kernel.
// `Service::handle` is transport-free; `Service::bind` mounts it on an
// httplib server.

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <memory>
#include <semaphore>
#include <string>
#include <vector>

#include "rrto/error.hpp"
#include "rrto/pipelines.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that collides with Eigen
// parameter names.
#include <httplib.h>

namespace rrto::service {

using json = nlohmann::json;
using pipelines::ModelSet;
using pipelines::Pipeline;

/// Compact JSON with doubles printed to 17 significant digits and object
/// keys in sorted order, so equal values give equal bytes.
inline void dump17(const json& j, std::string& out) {
  switch (j.type()) {
    case json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += json(k).dump();
        out += ':';
        dump17(v, out);
      }
      out += '}';
      break;
    }
    case json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump17(j[i], out);
      }
      out += ']';
      break;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        break;
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      break;
    }
    default:
      out += j.dump();
  }
}

inline std::string dump17(const json& j) {
  std::string s;
  dump17(j, s);
  return s;
}

struct Response {
  int status = 200;
  json body = json::object();
};

/// Request failure carrying its HTTP status.
struct HttpError : std::runtime_error {
  int status;
  HttpError(int s, const std::string& what) : std::runtime_error(what), status(s) {}
};

class Service {
 public:
  /// `models` may be null or empty; model endpoints then answer 503.
  explicit Service(std::shared_ptr<const ModelSet> models, std::string cors_origin = "*")
      : models_(std::move(models)), cors_(std::move(cors_origin)) {
    if (models_ && models_->geometry) {
      const auto& s = models_->geometry->sample_shape();
      rows_ = s[1];
      cols_ = s[2];
      simp_ = pipelines::simp_of(*models_->geometry);
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  Response handle(const std::string& method, const std::string& path, const std::string& body) const {
    try {
      return {200, route(method, path, body)};
    } catch (const HttpError& e) {
      return error(e.status, e.what());
    } catch (const ContractError& e) {
      return error(422, e.what());
    } catch (const json::exception& e) {
      return error(400, e.what());
    } catch (const std::exception& e) {
      return error(500, e.what());
    }
  }

  void bind(httplib::Server& server) const {
    auto reply = [this](const httplib::Request& req, httplib::Response& res) {
      const Response r = handle(req.method, req.path, req.body);
      res.status = r.status;
      res.set_header("Access-Control-Allow-Origin", cors_);
      res.set_content(dump17(r.body), "application/json");
    };
    server.Get(R"(/v1/.*)", reply);
    server.Post(R"(/v1/.*)", reply);
    server.Options(R"(/v1/.*)", [this](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      res.set_header("Access-Control-Allow-Origin", cors_);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
  }

 private:
  static Response error(int status, const std::string& msg) { return {status, {{"error", msg}, {"status", status}}}; }

  json route(const std::string& method, const std::string& path, const std::string& body) const {
    if (method == "GET" && path == "/v1/models") return list_models();
    if (method != "POST") throw HttpError(404, "no route for " + method + " " + path);
    const json req = parse_body(body);
    if (path == "/v1/geometry/decode") return decode(req);
    if (path == "/v1/geometry/encode") return encode(req);
    if (path == "/v1/latent/interpolate") return interpolate(req);
    if (path == "/v1/fem/verify") return verify(req);
    for (const std::string dir : {"direct", "inverse"}) {
      const std::string prefix = "/v1/predict/" + dir + "/";
      if (path.rfind(prefix, 0) == 0) return predict(dir == "direct", path.substr(prefix.size()), req);
    }
    throw HttpError(404, "no route for POST " + path);
  }

  static json parse_body(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw HttpError(400, "request body must be a JSON object");
    return j;
  }

  static const json& field(const json& req, const char* name) {
    if (!req.contains(name)) throw HttpError(400, std::string("missing field '") + name + "'");
    return req.at(name);
  }

  static std::vector<double> numbers(const json& j, const char* name) {
    if (!j.is_array()) throw HttpError(400, std::string("'") + name + "' must be an array of numbers");
    std::vector<double> v;
    v.reserve(j.size());
    for (const auto& x : j) {
      if (!x.is_number()) throw HttpError(400, std::string("'") + name + "' must be an array of numbers");
      v.push_back(x.get<double>());
    }
    return v;
  }

  static double number(const json& req, const char* name) {
    const json& j = field(req, name);
    if (!j.is_number()) throw HttpError(400, std::string("'") + name + "' must be a number");
    return j.get<double>();
  }

  static json grid_json(const double* p, int rows, int cols) {
    return {{"shape", {rows, cols}}, {"data", std::vector<double>(p, p + static_cast<std::size_t>(rows) * cols)}};
  }

  /// {shape:[r,c], data:[...]} checked against the registry mesh.
  Grid grid_of(const json& req, const char* name) const {
    const json& g = field(req, name);
    if (!g.is_object() || !g.contains("shape") || !g.contains("data"))
      throw HttpError(400, std::string("'") + name + "' must be {shape, data}");
    const auto shape = numbers(g.at("shape"), "shape");
    const auto data = numbers(g.at("data"), "data");
    if (shape.size() != 2) throw HttpError(422, "grid shape must have two entries");
    if (shape[0] != rows_ || shape[1] != cols_)
      throw HttpError(422, "grid shape (" + std::to_string(static_cast<long>(shape[0])) + ", " +
                               std::to_string(static_cast<long>(shape[1])) + ") does not match the mesh (" +
                               std::to_string(rows_) + ", " + std::to_string(cols_) + ")");
    if (data.size() != static_cast<std::size_t>(rows_) * cols_)
      throw HttpError(422, "grid data has " + std::to_string(data.size()) + " values, shape needs " +
                               std::to_string(rows_ * cols_));
    return Grid(rows_, cols_, data);
  }

  const ModelSet& models() const {
    if (!models_ || !models_->geometry) throw HttpError(503, "model registry not loaded");
    return *models_;
  }

  Pipeline pipeline(const std::string& qoi) const {
    const ModelSet& m = models();
    latentmap::Qoi q;
    try {
      q = latentmap::parse_qoi(qoi);
    } catch (const std::exception&) {
      throw HttpError(404, "unknown QoI '" + qoi + "'");
    }
    auto p = m.pipeline(q);
    if (!p) throw HttpError(404, "no models loaded for QoI '" + qoi + "'");
    return std::move(*p);
  }

  static json hull(const Eigen::MatrixXd& coeffs) {
    json h = json::array();
    for (Eigen::Index i = 0; i < coeffs.rows(); ++i) h.push_back({coeffs.row(i).minCoeff(), coeffs.row(i).maxCoeff()});
    return h;
  }

  json list_models() const {
    const ModelSet& m = models();
    json out{{"mesh", {{"rows", rows_}, {"cols", cols_}}}};
    json rr = json::array();
    for (const auto& [name, model] : {std::pair{"geometry", m.geometry}, {"sol1d", m.sol1d}, {"sol2d", m.sol2d}}) {
      if (!model) continue;
      const json& meta = model->metadata();
      rr.push_back({{"name", name},
                    {"k_max", model->kmax()},
                    {"latent", model->latent()},
                    {"train_loss", meta.value("train_loss", json(nullptr))},
                    {"test_loss", meta.value("test_loss", json(nullptr))},
                    {"hull", hull(model->train_coefficients())}});
    }
    out["autoencoders"] = rr;
    json maps = json::array();
    for (const auto& [key, map] : m.maps) {
      json range = json::array();
      for (const auto& [lo, hi] : map->input_range()) range.push_back({lo, hi});
      const json& rep = map->metadata().value("report", json::object());
      maps.push_back({{"qoi", latentmap::qoi_name(key.first)},
                      {"direction", latentmap::direction_name(key.second)},
                      {"in_dim", map->in_dim()},
                      {"out_dim", map->out_dim()},
                      {"r2_train", rep.value("r2_train", json(nullptr))},
                      {"input_range", range}});
    }
    out["maps"] = maps;
    json ps = json::array();
    for (latentmap::Qoi q : {latentmap::Qoi::scalar, latentmap::Qoi::d1, latentmap::Qoi::d2})
      if (m.pipeline(q)) ps.push_back(latentmap::qoi_name(q));
    out["pipelines"] = ps;
    return out;
  }

  nn::RowMat alpha_row(const json& req, const char* name) const {
    const auto a = numbers(field(req, name), name);
    const int k = models().geometry->kmax();
    if (static_cast<int>(a.size()) != k)
      throw HttpError(422, std::string("'") + name + "' has " + std::to_string(a.size()) + " entries, k_max is " +
                               std::to_string(k));
    return Eigen::Map<const nn::RowMat>(a.data(), 1, k);
  }

  json decode(const json& req) const {
    const nn::RowMat alpha = alpha_row(req, "alpha");
    bool clamped = false;
    const nn::Tensor x = pipeline_any().decode_geometry(alpha, &clamped);
    return geometry_json(x, clamped);
  }

  /// Geometry decoding does not depend on the QoI; any loaded pipeline or a
  /// bare geometry model will do.
  Pipeline pipeline_any() const {
    const ModelSet& m = models();
    return Pipeline(latentmap::Qoi::scalar, m.geometry, nullptr, nullptr, nullptr, simp_);
  }

  static json geometry_json(const nn::Tensor& x, bool clamped) {
    const int r = x.shape[2], c = x.shape[3];
    double mean = 0.0;
    for (double v : x.data) mean += v;
    mean /= static_cast<double>(x.data.size());
    return {{"grid", grid_json(x.data.data(), r, c)}, {"volume_fraction", mean}, {"clamped", clamped}};
  }

  json encode(const json& req) const {
    const ModelSet& m = models();
    const Grid g = grid_of(req, "grid");
    const nn::Tensor x({1, 1, rows_, cols_}, g.values);
    const nn::RowMat a = m.geometry->encode_project(x);
    return {{"alpha", std::vector<double>(a.data(), a.data() + a.size())}};
  }

  json interpolate(const json& req) const {
    const auto a = numbers(field(req, "alpha_a"), "alpha_a");
    const auto b = numbers(field(req, "alpha_b"), "alpha_b");
    const double t = number(req, "t");
    const auto v = [](const std::vector<double>& x) {
      return Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    };
    const Eigen::RowVectorXd r = pipelines::latent_interpolate(v(a), v(b), t);
    return {{"alpha", std::vector<double>(r.data(), r.data() + r.size())}};
  }

  json verify(const json& req) const {
    const Grid g = grid_of(req, "grid");
    for (double v : g.values)
      if (!(v >= 0.0 && v <= 1.0)) throw HttpError(422, "grid densities must lie in [0, 1]");
    fem_slots_.acquire();
    pipelines::FemReport r;
    try {
      r = pipelines::fem_verify(g, simp_);
    } catch (...) {
      fem_slots_.release();
      throw;
    }
    fem_slots_.release();
    return {{"vm_grid", grid_json(r.vm.values.data(), r.vm.rows, r.vm.cols)},
            {"vm_diag", r.vm_diag},
            {"vm_max", r.vm_max},
            {"compliance", r.compliance}};
  }

  /// Payload key per QoI: value (scalar), curve (1d), field (2d grid).
  json predict(bool direct, const std::string& qoi, const json& req) const {
    const Pipeline p = pipeline(qoi);
    if (direct && !p.direct_map()) throw HttpError(404, "no direct map loaded for QoI '" + qoi + "'");
    if (!direct && !p.inverse_map()) throw HttpError(404, "no inverse map loaded for QoI '" + qoi + "'");
    using latentmap::Qoi;
    if (direct) {
      const Grid g = grid_of(req, "grid");
      const nn::Tensor s = p.geo2sol(nn::Tensor({1, 1, rows_, cols_}, g.values));
      switch (p.qoi()) {
        case Qoi::scalar: return {{"value", s.data[0]}};
        case Qoi::d1: return {{"curve", std::vector<double>(s.data.begin(), s.data.end())}};
        case Qoi::d2: return {{"field", grid_json(s.data.data(), s.shape[2], s.shape[3])}};
      }
    }
    nn::Tensor s;
    switch (p.qoi()) {
      case Qoi::scalar: s = nn::Tensor({1, 1}, std::vector<double>{number(req, "value")}); break;
      case Qoi::d1: {
        const auto c = numbers(field(req, "curve"), "curve");
        const int w = p.qoi_shape()[0];
        if (static_cast<int>(c.size()) != w)
          throw HttpError(422, "curve has " + std::to_string(c.size()) + " values, expected " + std::to_string(w));
        s = nn::Tensor({1, w}, c);
        break;
      }
      case Qoi::d2: s = nn::Tensor({1, 1, rows_, cols_}, grid_of(req, "field").values); break;
    }
    const pipelines::InverseResult r = p.sol2geo(s);
    json out = geometry_json(r.x, r.clamped);
    out["alpha"] = std::vector<double>(r.alpha.data(), r.alpha.data() + r.alpha.size());
    out["out_of_range"] = static_cast<bool>(r.out_of_range[0]);
    return out;
  }

  std::shared_ptr<const ModelSet> models_;
  std::string cors_;
  int rows_ = 80, cols_ = 80;
  topopt::SimpConfig simp_;
  mutable std::counting_semaphore<2> fem_slots_{2};
};

}  // namespace rrto::service
