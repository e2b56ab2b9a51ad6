#pragma once

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "rrto/error.hpp"
#include "rrto/nn/layers.hpp"

namespace rrto::nn {

enum class OptKind { adabelief, nadam };

inline std::string opt_name(OptKind k) { return k == OptKind::adabelief ? "adabelief" : "nadam"; }

inline OptKind parse_opt(const std::string& s) {
  if (s == "adabelief") return OptKind::adabelief;
  if (s == "nadam") return OptKind::nadam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

/// First/second-moment optimizer with bias correction.
///
/// AdaBelief: s tracks (g - m)^2 + eps, step = lr * m_hat / (sqrt(s_hat) + eps).
/// Nadam:     v tracks g^2, the first moment gets the Nesterov look-ahead
///            m_hat = b1 m / (1 - b1^(t+1)) + (1 - b1) g / (1 - b1^t).
class Optimizer {
 public:
  explicit Optimizer(OptKind kind, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                     double eps = 1e-8)
      : kind_(kind), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  OptKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long step_count() const { return t_; }

  void step(const std::vector<Param*>& params) {
    if (m_.empty()) {
      for (const Param* p : params) {
        m_.emplace_back(p->value.size(), 0.0);
        v_.emplace_back(p->value.size(), 0.0);
      }
    }
    if (m_.size() != params.size()) throw ContractError("Optimizer: parameter list changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c1n = 1.0 - std::pow(b1_, static_cast<double>(t_ + 1));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      Param& p = *params[k];
      auto& m = m_[k];
      auto& v = v_[k];
      if (m.size() != p.value.size()) throw ContractError("Optimizer: moment buffer shape mismatch");
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m[i] = b1_ * m[i] + (1.0 - b1_) * g;
        double m_hat;
        if (kind_ == OptKind::adabelief) {
          const double d = g - m[i];
          v[i] = b2_ * v[i] + (1.0 - b2_) * d * d + eps_;
          m_hat = m[i] / c1;
        } else {
          v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
          m_hat = b1_ * m[i] / c1n + (1.0 - b1_) * g / c1;
        }
        p.value[i] -= lr_ * m_hat / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

 private:
  OptKind kind_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<Buffer> m_, v_;
};

}  // namespace rrto::nn
