#pragma once

#include <cmath>

#include "rrto/error.hpp"
#include "rrto/nn/tensor.hpp"

namespace rrto::nn {

struct LossValue {
  double value;
  Tensor grad;  // dL/d(prediction)
};

inline void check_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape != b.shape)
    throw ContractError(std::string(what) + ": shape " + to_string(a.shape) + " vs " + to_string(b.shape));
}

/// Mean of squared entries.
inline LossValue mse(const Tensor& pred, const Tensor& target) {
  check_same(pred, target, "mse");
  const double n = static_cast<double>(pred.size());
  Tensor g(pred.shape);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    s += d * d;
    g.data[i] = 2.0 * d / n;
  }
  return {s / n, std::move(g)};
}

/// ||target - pred||_F / ||target||_F over the whole batch.
inline LossValue relative_frobenius(const Tensor& pred, const Tensor& target) {
  check_same(pred, target, "relative_frobenius");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    num += d * d;
    den += target.data[i] * target.data[i];
  }
  if (!(den > 0.0)) throw ContractError("relative_frobenius: target has zero norm");
  const double r = std::sqrt(num), t = std::sqrt(den);
  Tensor g(pred.shape);
  if (r > 0.0)
    for (std::size_t i = 0; i < pred.size(); ++i) g.data[i] = (pred.data[i] - target.data[i]) / (r * t);
  return {r / t, std::move(g)};
}

}  // namespace rrto::nn
