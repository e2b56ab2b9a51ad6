#pragma once

// Central finite-difference check of Network::backward.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "rrto/nn.hpp"

namespace gradcheck {

using rrto::nn::Network;
using rrto::nn::Tensor;

inline Tensor random_tensor(rrto::nn::Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.data) v = d(rng);
  return t;
}

/// Loss L = sum_i c_i y_i with fixed random c, so dL/dy = c.
inline double probe_loss(const Network& net, const Tensor& x, const Tensor& c) {
  const Tensor y = net.forward(x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += c.data[i] * y.data[i];
  return s;
}

struct Result {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline double rel(double a, double f) {
  return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-3});
}

/// Compares analytic and central-difference gradients for up to
/// `per_param` entries of every parameter and of the input.
inline Result check(Network net, const Tensor& x, std::uint64_t seed, std::size_t per_param = 40,
                    double h = 1e-5) {
  const Tensor y = net.forward(x);
  const Tensor c = random_tensor(y.shape, seed ^ 0x9e3779b97f4a7c15ULL);
  net.zero_grad();
  net.forward_train(x);
  const Tensor gx = net.backward(c);

  Result r;
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n, per_param));
    return idx;
  };

  for (rrto::nn::Param* p : net.params()) {
    for (std::size_t i : pick(p->value.size())) {
      const double v0 = p->value[i];
      p->value[i] = v0 + h;
      const double lp = probe_loss(net, x, c);
      p->value[i] = v0 - h;
      const double lm = probe_loss(net, x, c);
      p->value[i] = v0;
      r.max_rel_error = std::max(r.max_rel_error, rel(p->grad[i], (lp - lm) / (2 * h)));
      ++r.checked;
    }
  }
  Tensor xp = x;
  for (std::size_t i : pick(x.size())) {
    const double v0 = xp.data[i];
    xp.data[i] = v0 + h;
    const double lp = probe_loss(net, xp, c);
    xp.data[i] = v0 - h;
    const double lm = probe_loss(net, xp, c);
    xp.data[i] = v0;
    r.max_rel_error = std::max(r.max_rel_error, rel(gx.data[i], (lp - lm) / (2 * h)));
    ++r.checked;
  }
  return r;
}


// ---------------------------------------------------------------------------
// One small network per layer kind plus the composed architectures.

using rrto::nn::Act;
using rrto::nn::CnnSpec;
using rrto::nn::MlpSpec;
using rrto::nn::Param;
using rrto::nn::Shape;
using rrto::nn::cnn_decoder;
using rrto::nn::cnn_encoder;
using rrto::nn::latent_mlp;
using rrto::nn::mlp_decoder;
using rrto::nn::mlp_encoder;

struct GradCase {
  const char* name;
  std::function<Network()> build;
  Shape input;
};

inline const std::vector<GradCase>& grad_cases() {
  static const std::vector<GradCase> cases = {
      {"dense_linear", [] { Network n({5}); n.dense(5, 4, Act::linear); return n; }, {3, 5}},
      {"dense_two_layer", [] { Network n({3}); n.dense(3, 6, Act::elu).dense(6, 2, Act::linear); return n; },
       {4, 3}},
      {"relu", [] { Network n({7}); n.dense(7, 7, Act::relu); return n; }, {3, 7}},
      {"elu", [] { Network n({7}); n.dense(7, 7, Act::elu); return n; }, {3, 7}},
      {"conv_s2p1",
       [] { Network n({2, 6, 6}); n.conv(2, 3, {3, 2, 1, 1}, Act::linear); return n; },
       {2, 2, 6, 6}},
      {"conv_s1p0_dilated",
       [] { Network n({2, 7, 6}); n.conv(2, 2, {3, 1, 0, 2}, Act::elu); return n; },
       {2, 2, 7, 6}},
      {"conv_pointwise",
       [] { Network n({3, 4, 4}); n.conv(3, 1, {1, 1, 0, 1}, Act::linear); return n; },
       {2, 3, 4, 4}},
      {"conv_transpose_s2_op1",
       [] { Network n({3, 3, 3}); n.conv_transpose(3, 2, {3, 2, 1, 1}, 1, Act::linear); return n; },
       {2, 3, 3, 3}},
      {"conv_transpose_s1",
       [] { Network n({2, 4, 3}); n.conv_transpose(2, 2, {3, 1, 1, 1}, 0, Act::elu); return n; },
       {2, 2, 4, 3}},
      {"reshape",
       [] { Network n({2, 2, 2}); n.reshape({8}).dense(8, 3, Act::linear); return n; },
       {2, 2, 2, 2}},
      {"small_cnn_autoencoder",
       [] {
         CnnSpec s{8, 6, {2, 3, 4}, 2};
         Network enc = cnn_encoder(s), dec = cnn_decoder(s);
         Network n({1, 8, 8});
         for (std::size_t i = 0; i < enc.size(); ++i) n.add(enc.layer(i).clone());
         for (std::size_t i = 0; i < dec.size(); ++i) n.add(dec.layer(i).clone());
         return n;
       },
       {2, 1, 8, 8}},
      {"mlp_autoencoder",
       [] {
         MlpSpec s{6, 5, 4, 3};
         Network enc = mlp_encoder(s), dec = mlp_decoder(s);
         Network n({6});
         for (std::size_t i = 0; i < enc.size(); ++i) n.add(enc.layer(i).clone());
         for (std::size_t i = 0; i < dec.size(); ++i) n.add(dec.layer(i).clone());
         return n;
       },
       {3, 6}},
      {"latent_map", [] { return latent_mlp(2, 1); }, {5, 2}},
  };
  return cases;
}

/// Runs case `i` with non-zero biases so every bias gradient path is used.
inline Result run_case(int i) {
  const GradCase& c = grad_cases()[i];
  Network n = c.build();
  n.initialize(100 + i);
  std::mt19937_64 rng(i);
  std::uniform_real_distribution<double> d(-0.2, 0.2);
  for (Param* p : n.params())
    if (p->name == "bias")
      for (double& v : p->value) v = d(rng);
  return check(n, random_tensor(c.input, 200 + i), 300 + i);
}

}  // namespace gradcheck
