#pragma once

// Encoder/decoder stacks for the geometry and stress autoencoders and the
// small regressors between their latent spaces.

#include <array>

#include "rrto/error.hpp"
#include "rrto/nn/network.hpp"

namespace rrto::nn {

struct CnnSpec {
  int grid = 80;                        // square input, divisible by 8
  int latent = 500;
  std::array<int, 3> channels{32, 64, 128};
  int bottleneck_channels = 32;         // channels after the decoder's dense layer
};

inline void check_cnn(const CnnSpec& s) {
  if (s.grid < 8 || s.grid % 8 != 0) throw ConfigError("CNN grid size must be a positive multiple of 8");
  if (s.latent < 1) throw ConfigError("latent size must be positive");
}

/// Three stride-2 3x3 convolutions then a dense layer to the latent size.
inline Network cnn_encoder(const CnnSpec& s) {
  check_cnn(s);
  const ConvGeom g{3, 2, 1, 1};
  const int c = s.grid / 8;
  const auto [c1, c2, c3] = s.channels;
  Network n({1, s.grid, s.grid});
  n.conv(1, c1, g, Act::relu).conv(c1, c2, g, Act::relu).conv(c2, c3, g, Act::relu);
  n.reshape({c3 * c * c});
  n.dense(c3 * c * c, s.latent, Act::relu);
  return n;
}

/// Dense layer, three stride-2 transposed convolutions and a 1x1 channel
/// reduction back to a single grid.
inline Network cnn_decoder(const CnnSpec& s) {
  check_cnn(s);
  const ConvGeom g{3, 2, 1, 1};
  const int c = s.grid / 8;
  const auto [c1, c2, c3] = s.channels;
  const int b = s.bottleneck_channels;
  Network n({s.latent});
  n.dense(s.latent, b * c * c, Act::relu);
  n.reshape({b, c, c});
  n.conv_transpose(b, c3, g, 1, Act::relu)
      .conv_transpose(c3, c2, g, 1, Act::relu)
      .conv_transpose(c2, c1, g, 1, Act::relu);
  n.conv(c1, 1, ConvGeom{1, 1, 0, 1}, Act::linear);
  return n;
}

struct MlpSpec {
  int features = 80;
  int latent = 500;
  int width = 64;
  int decoder_hidden = 6;  // dense layers of `width` before the output layer
};

inline Network mlp_encoder(const MlpSpec& s) {
  Network n({s.features});
  n.dense(s.features, s.width, Act::relu).dense(s.width, s.latent, Act::linear);
  return n;
}

inline Network mlp_decoder(const MlpSpec& s) {
  if (s.decoder_hidden < 1) throw ConfigError("decoder needs at least one hidden layer");
  Network n({s.latent});
  n.dense(s.latent, s.width, Act::relu);
  for (int i = 1; i < s.decoder_hidden; ++i) n.dense(s.width, s.width, Act::relu);
  n.dense(s.width, s.features, Act::linear);
  return n;
}

/// in -> 8 -> 16 -> 8 -> 4 -> out, ELU hidden layers, linear head.
inline Network latent_mlp(int in, int out) {
  if (in < 1 || out < 1) throw ConfigError("latent map dimensions must be positive");
  Network n({in});
  n.dense(in, 8, Act::elu).dense(8, 16, Act::elu).dense(16, 8, Act::elu).dense(8, 4, Act::elu);
  n.dense(4, out, Act::linear);
  return n;
}

}  // namespace rrto::nn
