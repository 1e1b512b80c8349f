#pragma once

// Targeted multi-view attention: the target token X^h queries each context
// family (spatial backdoor sample, BEV cells, neighbour tokens) separately
// and an MLP aggregates the three views with X^h into X_attn^i.

#include "causaltraj/config.hpp"
#include "causaltraj/nn.hpp"

namespace causaltraj {

using ag::Tensor;

struct ViewContext {
  Tensor value;    // 1 x D
  Matrix weights;  // 1 x N_keys attention weights (raw, before the residual)
  bool valid = true;
};

struct ContextToken {
  Tensor value;  // 1 x D, X_attn^i
  /// [X_attn^i; x_s; x_b; x_t], the cross-modal rows progressive fusion attends to.
  Tensor views;
  int backdoor_index = 0;
  bool temporal_valid = true;
};

class MultiViewAttention {
 public:
  MultiViewAttention() = default;
  MultiViewAttention(nn::ParamStore& store, int dim, const AttentionConfig& cfg, const std::string& group = "attention");

  /// Throws DomainError on an empty key set.
  ViewContext spatial(const Tensor& xh, const Tensor& spatial_tokens) const;
  ViewContext bev(const Tensor& xh, const Tensor& bev_tokens) const;
  /// Masked rows get zero weight. With no valid neighbour the view is the zero
  /// vector and `valid` is false.
  ViewContext temporal(const Tensor& xh, const Tensor& neighbors, const Eigen::VectorXd& mask) const;

  /// Two-layer projection of [x_s, x_b, x_t, X^h] to D.
  Tensor aggregate(const Tensor& xs, const Tensor& xb, const Tensor& xt, const Tensor& xh) const;

  /// Full token for one backdoor sample. Precomputed BEV/temporal views are
  /// shared across samples, since they do not depend on i.
  ContextToken context(const Tensor& xh, const ViewContext& xs, const ViewContext& xb, const ViewContext& xt,
                       int index) const;

  int dim() const { return dim_; }

 private:
  ViewContext attend(const nn::Attention& attn, const nn::LayerNorm& norm, const Tensor& xh, const Tensor& keys,
                     const Eigen::VectorXd* mask) const;

  int dim_ = 0;
  bool residual_ = true;
  nn::Attention spatial_, bev_, temporal_;
  nn::LayerNorm spatial_norm_, bev_norm_, temporal_norm_;
  nn::Mlp aggregate_;
};

}  // namespace causaltraj
