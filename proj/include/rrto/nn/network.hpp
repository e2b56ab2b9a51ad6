#pragma once

#include <json.hpp>

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "rrto/error.hpp"
#include "rrto/nn/layers.hpp"
#include "rrto/nn/tensor.hpp"

namespace rrto::nn {

/// Sequential stack of layers with a fixed per-sample input shape.
class Network {
 public:
  Network() = default;
  explicit Network(Shape input_shape) : input_shape_(std::move(input_shape)) {}

  Network(const Network& o) : input_shape_(o.input_shape_) {
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
  }
  Network& operator=(const Network& o) {
    if (this != &o) {
      Network tmp(o);
      *this = std::move(tmp);
    }
    return *this;
  }
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const Shape& input_shape() const { return input_shape_; }
  Shape output_shape() const { return shapes().back(); }
  std::size_t size() const { return layers_.size(); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }

  Network& add(std::unique_ptr<Layer> l) {
    layers_.push_back(std::move(l));
    return *this;
  }
  Network& dense(int in, int out, Act act) {
    add(std::make_unique<Dense>(in, out));
    return activation(act);
  }
  Network& conv(int in, int out, ConvGeom g, Act act) {
    add(std::make_unique<Conv2d>(in, out, g));
    return activation(act);
  }
  Network& conv_transpose(int in, int out, ConvGeom g, int output_padding, Act act) {
    add(std::make_unique<ConvTranspose2d>(in, out, g, output_padding));
    return activation(act);
  }
  Network& activation(Act act) { return add(std::make_unique<Activation>(act)); }
  Network& reshape(Shape s) { return add(std::make_unique<Reshape>(std::move(s))); }

  /// Per-layer output shapes (batch axis excluded).
  std::vector<Shape> shapes() const {
    std::vector<Shape> out;
    Shape s = input_shape_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      try {
        s = layers_[i]->output_shape(s);
      } catch (const ContractError& e) {
        throw ContractError("layer " + std::to_string(i) + ": " + e.what());
      }
      out.push_back(s);
    }
    if (out.empty()) out.push_back(input_shape_);
    return out;
  }

  /// Inference pass; keeps no state. Samples go through one at a time:
  /// Eigen picks different product kernels for different batch sizes, and
  /// a prediction must not depend on what it was batched with.
  Tensor forward(const Tensor& x) const {
    check_input(x);
    Shape out_shape{x.batch()};
    const Shape s = output_shape();
    out_shape.insert(out_shape.end(), s.begin(), s.end());
    Tensor y(out_shape);
    for (int b = 0; b < x.batch(); ++b) {
      Tensor h = x.slice(b, b + 1);
      for (std::size_t i = 0; i < layers_.size(); ++i) h = run(i, h);
      std::copy(h.data.begin(), h.data.end(), y.sample(b));
    }
    return y;
  }

  /// Training pass; records activations for backward().
  Tensor forward_train(const Tensor& x) {
    check_input(x);
    tape_.clear();
    tape_.reserve(layers_.size() + 1);
    tape_.push_back(x);
    for (std::size_t i = 0; i < layers_.size(); ++i) tape_.push_back(run(i, tape_.back()));
    return tape_.back();
  }

  /// Accumulates parameter gradients for the last forward_train() and
  /// returns dL/dx. Consumes the recorded activations.
  Tensor backward(const Tensor& grad_out) {
    if (tape_.empty()) throw StateError("Network::backward called without a preceding forward_train");
    if (grad_out.shape != tape_.back().shape)
      throw ContractError("backward: gradient shape " + to_string(grad_out.shape) +
                          " does not match output " + to_string(tape_.back().shape));
    Tensor g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(tape_[i], tape_[i + 1], g);
    tape_.clear();
    return g;
  }

  std::vector<Param*> params() {
    std::vector<Param*> ps;
    for (auto& l : layers_)
      for (Param* p : l->params()) ps.push_back(p);
    return ps;
  }
  std::vector<const Param*> params() const {
    std::vector<const Param*> ps;
    for (const auto& l : layers_)
      for (const Param* p : std::as_const(*l).params()) ps.push_back(p);
    return ps;
  }

  std::size_t n_params() const {
    std::size_t n = 0;
    for (const Param* p : params()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (Param* p : params()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  }

  /// Kaiming/Xavier initialization; each parametric layer uses the
  /// activation that follows it.
  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Act act = Act::linear;
      if (i + 1 < layers_.size())
        if (auto* a = dynamic_cast<const Activation*>(layers_[i + 1].get())) act = a->act();
      if (auto* d = dynamic_cast<Dense*>(layers_[i].get())) d->init(act, rng);
      if (auto* c = dynamic_cast<Conv2d*>(layers_[i].get())) c->init(act, rng);
      if (auto* t = dynamic_cast<ConvTranspose2d*>(layers_[i].get())) t->init(act, rng);
    }
  }

  std::vector<double> flat_params() const {
    std::vector<double> v;
    v.reserve(n_params());
    for (const Param* p : params()) v.insert(v.end(), p->value.begin(), p->value.end());
    return v;
  }

  void set_flat_params(const std::vector<double>& v) {
    if (v.size() != n_params())
      throw FormatError("parameter vector has " + std::to_string(v.size()) + " entries, network needs " +
                        std::to_string(n_params()));
    std::size_t k = 0;
    for (Param* p : params())
      for (double& x : p->value) x = v[k++];
  }

  json graph() const {
    json layers = json::array();
    for (const auto& l : layers_) layers.push_back(l->config());
    return {{"input_shape", input_shape_}, {"layers", layers}};
  }

  static Network from_graph(const json& j) {
    Network n(j.at("input_shape").get<Shape>());
    for (const auto& l : j.at("layers")) n.add(layer_from_config(l));
    n.shapes();
    return n;
  }

 private:
  void check_input(const Tensor& x) const {
    if (x.shape.size() != input_shape_.size() + 1 || x.sample_shape() != input_shape_)
      throw ContractError("network input: expected (n, " +
                          to_string(input_shape_).substr(1) + ", got " + to_string(x.shape));
  }

  Tensor run(std::size_t i, const Tensor& h) const {
    try {
      return layers_[i]->forward(h);
    } catch (const ContractError& e) {
      throw ContractError("layer " + std::to_string(i) + " (" + layers_[i]->kind() + "): " + e.what());
    }
  }

  Shape input_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Tensor> tape_;
};

}  // namespace rrto::nn
