#pragma once

// Cross-modal progressive fusion (K anchor queries refined T_rec times
// against the context rows) and dual-scale information fusion (a temporal
// convolution over the target history plus a convolution over a social grid
// of neighbours).

#include "causaltraj/attention.hpp"
#include "causaltraj/scene.hpp"

namespace causaltraj {

struct AnchorQuery {
  Tensor values;  // K x D
  int stage = 0;
  /// Set when fusion was asked for zero refinements.
  bool warning = false;
};

class ProgressiveFusion {
 public:
  ProgressiveFusion() = default;
  ProgressiveFusion(nn::ParamStore& store, int dim, int maneuvers, int heads, const std::string& group = "fusion");

  /// The learned anchor-free query Q_0 at stage 0.
  AnchorQuery initial() const;
  /// One stage: attention from the queries to the context rows, then a
  /// feed-forward step, both residual and pre-normalised. Weights are shared
  /// across stages, so resuming from a stored stage reproduces later stages.
  AnchorQuery refine(const AnchorQuery& q, const ContextToken& ctx) const;
  AnchorQuery fuse(const ContextToken& ctx, const AnchorQuery& q0, int t_rec) const;
  AnchorQuery fuse(const ContextToken& ctx, int t_rec) const { return fuse(ctx, initial(), t_rec); }

 private:
  Tensor q0_;
  nn::LayerNorm query_norm_, key_norm_, ffn_norm_;
  nn::Attention attention_;
  nn::Mlp ffn_;
};

class DualScaleFusion {
 public:
  DualScaleFusion() = default;
  /// `history_length` is t_h + 1; positions are multiplied by `input_scale`.
  DualScaleFusion(nn::ParamStore& store, int dim, const FusionConfig& cfg, int history_length, double input_scale,
                  const std::string& group = "dual");

  /// Fine scale: temporal convolution over the target history relative to
  /// its current position.
  Tensor target_branch(const AgentTrack& target) const;
  /// Coarse scale: bias-free convolution over the social grid, so an empty
  /// grid contributes exactly zero.
  Tensor neighbor_branch(const AgentTrack& target, const std::vector<AgentTrack>& neighbors) const;
  /// G = target branch + neighbour branch (1 x D).
  Tensor operator()(const AgentTrack& target, const std::vector<AgentTrack>& neighbors) const;

  /// Grid cell (row-major, longitudinal x lateral) of each neighbour, -1 when
  /// it falls outside the grid.
  std::vector<int> cells(const AgentTrack& target, const std::vector<AgentTrack>& neighbors) const;

 private:
  Matrix relative_history(const AgentTrack& track, const Eigen::RowVector2d& origin) const;

  FusionConfig cfg_;
  int history_ = 0;
  double scale_ = 1.0;
  std::vector<Matrix> time_shifts_;  // one per fine-kernel tap
  std::vector<Tensor> fine_taps_;
  Tensor fine_bias_;
  nn::Linear fine_out_;
  nn::Linear neighbor_in_;
  std::vector<Matrix> grid_shifts_;  // 3 x 3 neighbourhood on the grid
  std::vector<Tensor> coarse_taps_;
  nn::Linear coarse_out_;
};

}  // namespace causaltraj
