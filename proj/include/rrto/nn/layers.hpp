#pragma once

// Sequential layer kernels. Layers hold parameters and their gradient
// buffers but no activations, so a const forward is safe to call from
// several threads at once.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rrto/error.hpp"
#include "rrto/nn/tensor.hpp"

namespace rrto::nn {

using json = nlohmann::json;

enum class Act { linear, relu, elu };

inline std::string act_name(Act a) {
  switch (a) {
    case Act::linear: return "linear";
    case Act::relu: return "relu";
    case Act::elu: return "elu";
  }
  return "?";
}

inline Act parse_act(const std::string& s) {
  if (s == "linear") return Act::linear;
  if (s == "relu") return Act::relu;
  if (s == "elu") return Act::elu;
  throw FormatError("unknown activation '" + s + "'");
}

/// A trainable array and its gradient accumulator.
struct Param {
  std::string name;
  Shape shape;
  Buffer value;
  Buffer grad;

  Param(std::string n, Shape s)
      : name(std::move(n)), shape(std::move(s)), value(numel(shape), 0.0), grad(numel(shape), 0.0) {}
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  /// Per-sample output shape; throws ContractError on an incompatible input.
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual Tensor forward(const Tensor& x) const = 0;
  /// Accumulates parameter gradients and returns dL/dx.
  virtual Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy) = 0;
  virtual json config() const = 0;
  virtual std::vector<Param*> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;

  std::vector<const Param*> params() const {
    auto ps = const_cast<Layer*>(this)->params();
    return {ps.begin(), ps.end()};
  }
};

/// Uniform(-bound, bound) initialization; bound = sqrt(6 / fan_in) for ReLU
/// (Kaiming), sqrt(6 / (fan_in + fan_out)) otherwise (Xavier).
inline void init_uniform(Param& w, double fan_in, double fan_out, Act act, std::mt19937_64& rng) {
  const double bound =
      act == Act::relu ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : w.value) v = dist(rng);
}

// ---------------------------------------------------------------------------

class Dense final : public Layer {
 public:
  Dense(int in, int out) : in_(in), out_(out), w_("weight", {out, in}), b_("bias", {out}) {
    detail::require(in > 0 && out > 0, "Dense: sizes must be positive");
  }

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  std::string kind() const override { return "dense"; }

  Shape output_shape(const Shape& in) const override {
    if (in != Shape{in_})
      throw ContractError("dense expects " + to_string({in_}) + ", got " + to_string(in));
    return {out_};
  }

  Tensor forward(const Tensor& x) const override {
    Tensor y({x.batch(), out_});
    auto Y = y.matrix();
    Y.noalias() = x.matrix() * weight().transpose();
    Y.rowwise() += bias().transpose();
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy) override {
    const auto G = gy.matrix();
    MatMap(w_.grad.data(), out_, in_).noalias() += G.transpose() * x.matrix();
    Eigen::Map<Eigen::VectorXd>(b_.grad.data(), out_) += G.colwise().sum().transpose();
    Tensor gx({x.batch(), in_});
    gx.matrix().noalias() = G * weight();
    return gx.reshaped(x.shape);
  }

  void init(Act act, std::mt19937_64& rng) {
    init_uniform(w_, in_, out_, act, rng);
    std::fill(b_.value.begin(), b_.value.end(), 0.0);
  }

  ConstMatMap weight() const { return ConstMatMap(w_.value.data(), out_, in_); }
  Eigen::Map<const Eigen::VectorXd> bias() const { return {b_.value.data(), out_}; }

  json config() const override { return {{"kind", kind()}, {"in", in_}, {"out", out_}}; }
  std::vector<Param*> params() override { return {&w_, &b_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

 private:
  int in_, out_;
  Param w_, b_;
};

// ---------------------------------------------------------------------------
// Convolution geometry shared by conv and conv-transpose.

struct ConvGeom {
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  int dilation = 1;

  int span() const { return dilation * (kernel - 1) + 1; }
  int conv_out(int n) const { return (n + 2 * padding - span()) / stride + 1; }
};

/// Patch matrix (C*k*k, ho*wo) of a (C, h, w) image for the grid of ho x wo
/// windows anchored at (i*stride - padding, j*stride - padding).
/// Output columns [lo, hi) whose input column oj*stride + off lies in [0, w).
inline std::pair<int, int> valid_range(int off, int stride, int w, int wo) {
  int lo = off >= 0 ? 0 : (-off + stride - 1) / stride;
  int hi = w - off <= 0 ? 0 : (w - off + stride - 1) / stride;
  lo = std::min(lo, wo);
  hi = std::clamp(hi, lo, wo);
  return {lo, hi};
}

inline void im2col(const double* x, int c, int h, int w, const ConvGeom& g, int ho, int wo,
                   double* col) {
  const int k = g.kernel, s = g.stride;
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        double* row = col + static_cast<std::size_t>((ci * k + ki) * k + kj) * ho * wo;
        const double* plane = x + static_cast<std::size_t>(ci) * h * w;
        const int off = kj * g.dilation - g.padding;
        const auto [lo, hi] = valid_range(off, s, w, wo);
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * s - g.padding + ki * g.dilation;
          double* dst = row + oi * wo;
          if (ii < 0 || ii >= h) {
            std::fill_n(dst, wo, 0.0);
            continue;
          }
          const double* src = plane + ii * w + off;
          std::fill_n(dst, lo, 0.0);
          for (int oj = lo; oj < hi; ++oj) dst[oj] = src[oj * s];
          std::fill_n(dst + hi, wo - hi, 0.0);
        }
      }
}

/// Adjoint of im2col: scatters-adds a patch matrix back into a (C, h, w) image.
inline void col2im(const double* col, int c, int h, int w, const ConvGeom& g, int ho, int wo,
                   double* x) {
  const int k = g.kernel, s = g.stride;
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const double* row = col + static_cast<std::size_t>((ci * k + ki) * k + kj) * ho * wo;
        double* plane = x + static_cast<std::size_t>(ci) * h * w;
        const int off = kj * g.dilation - g.padding;
        const auto [lo, hi] = valid_range(off, s, w, wo);
        for (int oi = 0; oi < ho; ++oi) {
          const int ii = oi * s - g.padding + ki * g.dilation;
          if (ii < 0 || ii >= h) continue;
          const double* src = row + oi * wo;
          double* dst = plane + ii * w + off;
          for (int oj = lo; oj < hi; ++oj) dst[oj * s] += src[oj];
        }
      }
}

inline json geom_json(const ConvGeom& g) {
  return {{"kernel", g.kernel}, {"stride", g.stride}, {"padding", g.padding}, {"dilation", g.dilation}};
}

inline ConvGeom geom_from_json(const json& j) {
  return {j.at("kernel").get<int>(), j.at("stride").get<int>(), j.at("padding").get<int>(),
          j.at("dilation").get<int>()};
}

/// 2-D cross-correlation, weight layout (out, in, k, k).
class Conv2d final : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, ConvGeom g)
      : cin_(in_ch), cout_(out_ch), g_(g), w_("weight", {out_ch, in_ch, g.kernel, g.kernel}),
        b_("bias", {out_ch}) {
    detail::require(in_ch > 0 && out_ch > 0 && g.kernel > 0 && g.stride > 0 && g.padding >= 0 &&
                        g.dilation > 0,
                    "Conv2d: invalid configuration");
  }

  std::string kind() const override { return "conv"; }
  const ConvGeom& geom() const { return g_; }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3 || in[0] != cin_)
      throw ContractError("conv expects (" + std::to_string(cin_) + ", h, w), got " + to_string(in));
    const int ho = g_.conv_out(in[1]), wo = g_.conv_out(in[2]);
    if (ho < 1 || wo < 1) throw ContractError("conv: input " + to_string(in) + " smaller than kernel");
    return {cout_, ho, wo};
  }

  Tensor forward(const Tensor& x) const override {
    const Shape os = output_shape(x.sample_shape());
    const int h = x.shape[2], w = x.shape[3], ho = os[1], wo = os[2], p = ho * wo;
    const int kk = cin_ * g_.kernel * g_.kernel;
    Tensor y({x.batch(), cout_, ho, wo});
    RowMat col(kk, p);
    const ConstMatMap W(w_.value.data(), cout_, kk);
    for (int b = 0; b < x.batch(); ++b) {
      im2col(x.sample(b), cin_, h, w, g_, ho, wo, col.data());
      MatMap Y(y.sample(b), cout_, p);
      Y.noalias() = W * col;
      Y.colwise() += Eigen::Map<const Eigen::VectorXd>(b_.value.data(), cout_);
    }
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy) override {
    const int h = x.shape[2], w = x.shape[3], ho = y.shape[2], wo = y.shape[3], p = ho * wo;
    const int kk = cin_ * g_.kernel * g_.kernel;
    Tensor gx(x.shape);
    RowMat col(kk, p), dcol(kk, p);
    const ConstMatMap W(w_.value.data(), cout_, kk);
    MatMap dW(w_.grad.data(), cout_, kk);
    Eigen::Map<Eigen::VectorXd> db(b_.grad.data(), cout_);
    for (int b = 0; b < x.batch(); ++b) {
      const ConstMatMap G(gy.sample(b), cout_, p);
      im2col(x.sample(b), cin_, h, w, g_, ho, wo, col.data());
      dW.noalias() += G * col.transpose();
      db += G.rowwise().sum();
      dcol.noalias() = W.transpose() * G;
      col2im(dcol.data(), cin_, h, w, g_, ho, wo, gx.sample(b));
    }
    return gx;
  }

  void init(Act act, std::mt19937_64& rng) {
    const double k2 = g_.kernel * g_.kernel;
    init_uniform(w_, cin_ * k2, cout_ * k2, act, rng);
    std::fill(b_.value.begin(), b_.value.end(), 0.0);
  }

  json config() const override {
    return {{"kind", kind()}, {"in", cin_}, {"out", cout_}, {"geom", geom_json(g_)}};
  }
  std::vector<Param*> params() override { return {&w_, &b_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

 private:
  int cin_, cout_;
  ConvGeom g_;
  Param w_, b_;
};

/// Transposed convolution (adjoint of Conv2d w.r.t. its input), weight
/// layout (in, out, k, k). output_padding extends the bottom/right edge so
/// that stride-2 layers can exactly double the spatial size.
class ConvTranspose2d final : public Layer {
 public:
  ConvTranspose2d(int in_ch, int out_ch, ConvGeom g, int output_padding)
      : cin_(in_ch), cout_(out_ch), g_(g), out_pad_(output_padding),
        w_("weight", {in_ch, out_ch, g.kernel, g.kernel}), b_("bias", {out_ch}) {
    detail::require(in_ch > 0 && out_ch > 0 && g.kernel > 0 && g.stride > 0 && g.padding >= 0 &&
                        g.dilation > 0 && output_padding >= 0 &&
                        output_padding < std::max(g.stride, g.dilation),
                    "ConvTranspose2d: invalid configuration");
  }

  std::string kind() const override { return "conv_transpose"; }

  int transpose_out(int n) const { return (n - 1) * g_.stride - 2 * g_.padding + g_.span() + out_pad_; }

  Shape output_shape(const Shape& in) const override {
    if (in.size() != 3 || in[0] != cin_)
      throw ContractError("conv_transpose expects (" + std::to_string(cin_) + ", h, w), got " +
                          to_string(in));
    const int ho = transpose_out(in[1]), wo = transpose_out(in[2]);
    if (ho < 1 || wo < 1) throw ContractError("conv_transpose: empty output for " + to_string(in));
    return {cout_, ho, wo};
  }

  Tensor forward(const Tensor& x) const override {
    const Shape os = output_shape(x.sample_shape());
    const int h = x.shape[2], w = x.shape[3], ho = os[1], wo = os[2];
    const int kk = cout_ * g_.kernel * g_.kernel;
    Tensor y({x.batch(), cout_, ho, wo});
    RowMat col(kk, h * w);
    const ConstMatMap W(w_.value.data(), cin_, kk);
    for (int b = 0; b < x.batch(); ++b) {
      col.noalias() = W.transpose() * ConstMatMap(x.sample(b), cin_, h * w);
      col2im(col.data(), cout_, ho, wo, g_, h, w, y.sample(b));
      MatMap(y.sample(b), cout_, ho * wo).colwise() +=
          Eigen::Map<const Eigen::VectorXd>(b_.value.data(), cout_);
    }
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy) override {
    const int h = x.shape[2], w = x.shape[3], ho = y.shape[2], wo = y.shape[3];
    const int kk = cout_ * g_.kernel * g_.kernel;
    Tensor gx(x.shape);
    RowMat col(kk, h * w);
    const ConstMatMap W(w_.value.data(), cin_, kk);
    MatMap dW(w_.grad.data(), cin_, kk);
    Eigen::Map<Eigen::VectorXd> db(b_.grad.data(), cout_);
    for (int b = 0; b < x.batch(); ++b) {
      const double* g = gy.sample(b);
      im2col(g, cout_, ho, wo, g_, h, w, col.data());
      const ConstMatMap X(x.sample(b), cin_, h * w);
      dW.noalias() += X * col.transpose();
      db += ConstMatMap(g, cout_, ho * wo).rowwise().sum();
      MatMap(gx.sample(b), cin_, h * w).noalias() = W * col;
    }
    return gx;
  }

  void init(Act act, std::mt19937_64& rng) {
    // Each output pixel sees about in*k*k/stride^2 inputs.
    const double k2 = g_.kernel * g_.kernel, s2 = g_.stride * g_.stride;
    init_uniform(w_, cin_ * k2 / s2, cout_ * k2 / s2, act, rng);
    std::fill(b_.value.begin(), b_.value.end(), 0.0);
  }

  json config() const override {
    return {{"kind", kind()},
            {"in", cin_},
            {"out", cout_},
            {"geom", geom_json(g_)},
            {"output_padding", out_pad_}};
  }
  std::vector<Param*> params() override { return {&w_, &b_}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvTranspose2d>(*this); }

 private:
  int cin_, cout_;
  ConvGeom g_;
  int out_pad_;
  Param w_, b_;
};

// ---------------------------------------------------------------------------

class Activation final : public Layer {
 public:
  explicit Activation(Act a) : act_(a) {}
  std::string kind() const override { return "activation"; }
  Act act() const { return act_; }
  Shape output_shape(const Shape& in) const override { return in; }

  Tensor forward(const Tensor& x) const override {
    Tensor y = x;
    switch (act_) {
      case Act::linear: break;
      case Act::relu:
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        break;
      case Act::elu:
        for (double& v : y.data) v = v > 0.0 ? v : std::expm1(v);
        break;
    }
    return y;
  }

  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& gy) override {
    Tensor gx = gy;
    switch (act_) {
      case Act::linear: break;
      case Act::relu:
        for (std::size_t i = 0; i < gx.size(); ++i)
          if (!(x.data[i] > 0.0)) gx.data[i] = 0.0;
        break;
      case Act::elu:
        for (std::size_t i = 0; i < gx.size(); ++i)
          if (!(x.data[i] > 0.0)) gx.data[i] *= y.data[i] + 1.0;
        break;
    }
    return gx;
  }

  json config() const override { return {{"kind", kind()}, {"act", act_name(act_)}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Activation>(*this); }

 private:
  Act act_;
};

/// Changes the per-sample shape without touching data.
class Reshape final : public Layer {
 public:
  explicit Reshape(Shape target) : target_(std::move(target)) {}
  std::string kind() const override { return "reshape"; }

  Shape output_shape(const Shape& in) const override {
    if (numel(in) != numel(target_))
      throw ContractError("reshape to " + to_string(target_) + " from " + to_string(in));
    return target_;
  }
  Tensor forward(const Tensor& x) const override {
    Shape s{x.batch()};
    const Shape t = output_shape(x.sample_shape());
    s.insert(s.end(), t.begin(), t.end());
    return x.reshaped(std::move(s));
  }
  Tensor backward(const Tensor& x, const Tensor&, const Tensor& gy) override {
    return gy.reshaped(x.shape);
  }
  json config() const override { return {{"kind", kind()}, {"shape", target_}}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Reshape>(*this); }

 private:
  Shape target_;
};

inline std::unique_ptr<Layer> layer_from_config(const json& j) {
  const std::string k = j.at("kind").get<std::string>();
  if (k == "dense") return std::make_unique<Dense>(j.at("in").get<int>(), j.at("out").get<int>());
  if (k == "conv")
    return std::make_unique<Conv2d>(j.at("in").get<int>(), j.at("out").get<int>(),
                                    geom_from_json(j.at("geom")));
  if (k == "conv_transpose")
    return std::make_unique<ConvTranspose2d>(j.at("in").get<int>(), j.at("out").get<int>(),
                                             geom_from_json(j.at("geom")),
                                             j.at("output_padding").get<int>());
  if (k == "activation") return std::make_unique<Activation>(parse_act(j.at("act").get<std::string>()));
  if (k == "reshape") return std::make_unique<Reshape>(j.at("shape").get<Shape>());
  throw FormatError("unknown layer kind '" + k + "'");
}

}  // namespace rrto::nn
