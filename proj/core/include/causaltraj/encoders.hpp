#pragma once

// Token extraction: spatial (map polylines), temporal (agent histories) and
// BEV (rasterised semantic layers). Each encoder takes tensors so gradients
// can flow back to raw inputs; the *_input helpers build those tensors from a
// Scene.

#include "causaltraj/config.hpp"
#include "causaltraj/nn.hpp"
#include "causaltraj/scene.hpp"

#include <vector>

namespace causaltraj {

using ag::Tensor;

/// N_m x (n * W_m): row per polyline, waypoints laid out consecutively.
/// x and y are multiplied by `input_scale`; other attributes pass through.
Matrix spatial_input(const std::vector<MapPolyline>& map, double input_scale);

/// N x ((t_h + 1) * W_a) history states, masked frames zero.
Matrix temporal_input(const std::vector<const AgentTrack*>& tracks, double input_scale);

struct TemporalTokens {
  Tensor target;              // 1 x D  (X^h)
  Tensor neighbors;           // N_a x D (T^h); empty when N_a = 0
  Eigen::VectorXd neighbor_mask;  // length N_a, 1 = real neighbour
};

/// GRU over waypoints, then one fully connected graph-attention layer
/// across polylines.
class SpatialEncoder {
 public:
  SpatialEncoder() = default;
  SpatialEncoder(nn::ParamStore& store, const EncoderConfig& cfg, int map_width, const std::string& group = "spatial");

  /// input: N_m x (n * W_m) -> N_m x D.
  Tensor operator()(const Tensor& input) const;
  Tensor encode(const std::vector<MapPolyline>& map) const;

 private:
  EncoderConfig cfg_;
  int width_ = 4;
  nn::GruCell gru_;
  nn::LayerNorm norm1_, norm2_;
  nn::Attention graph_;
  nn::Mlp ffn_;
};

/// Shared single-layer GRU over each track's history.
class TemporalEncoder {
 public:
  TemporalEncoder() = default;
  TemporalEncoder(nn::ParamStore& store, const EncoderConfig& cfg, int state_width,
                  const std::string& group = "temporal");

  /// input: N x ((t_h + 1) * W_a) -> N x D final hidden states.
  Tensor operator()(const Tensor& input) const;
  TemporalTokens encode(const AgentTrack& target, const std::vector<AgentTrack>& neighbors) const;
  /// Encodes just the target track (1 x D).
  Tensor encode_target(const AgentTrack& target) const;

 private:
  EncoderConfig cfg_;
  int width_ = 2;
  nn::GruCell gru_;
};

/// Multi-kernel convolution pyramid per semantic layer, adaptive pooling to a
/// fixed grid, then a per-cell feed-forward projection to D.
class BevEncoder {
 public:
  BevEncoder() = default;
  BevEncoder(nn::ParamStore& store, const EncoderConfig& cfg, const std::string& group = "bev");

  /// Three H x W layers -> (grid * grid) x D tokens.
  Tensor operator()(const Tensor& agent, const Tensor& map, const Tensor& raster) const;
  Tensor encode(const BevRaster& bev) const;
  Index token_count() const { return static_cast<Index>(cfg_.pyramid_grid) * cfg_.pyramid_grid; }

 private:
  EncoderConfig cfg_;
  // kernels_[layer][kernel_size_index * channels + channel]
  std::vector<std::vector<Tensor>> kernels_;
  std::vector<std::vector<Tensor>> biases_;
  nn::Mlp project_;
};

}  // namespace causaltraj
