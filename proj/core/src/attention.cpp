#include "causaltraj/attention.hpp"

#include "causaltraj/errors.hpp"

namespace causaltraj {

MultiViewAttention::MultiViewAttention(nn::ParamStore& store, int dim, const AttentionConfig& cfg,
                                       const std::string& g)
    : dim_(dim),
      residual_(cfg.residual),
      spatial_(store, g + ".spatial", dim, cfg.heads, g, false),
      bev_(store, g + ".bev", dim, cfg.heads, g, false),
      temporal_(store, g + ".temporal", dim, cfg.heads, g, false),
      spatial_norm_(store, g + ".spatial_norm", dim, g),
      bev_norm_(store, g + ".bev_norm", dim, g),
      temporal_norm_(store, g + ".temporal_norm", dim, g),
      aggregate_(store, g + ".aggregate", 4 * dim, dim, dim, g) {}

ViewContext MultiViewAttention::attend(const nn::Attention& attn, const nn::LayerNorm& norm, const Tensor& xh,
                                       const Tensor& keys, const Eigen::VectorXd* mask) const {
  auto r = attn(xh, keys, mask);
  ViewContext out;
  out.weights = r.weights;
  out.value = residual_ ? norm(xh + r.output) : r.output;
  return out;
}

ViewContext MultiViewAttention::spatial(const Tensor& xh, const Tensor& s) const {
  if (s.rows() == 0) throw DomainError("spatial attention needs at least one key");
  return attend(spatial_, spatial_norm_, xh, s, nullptr);
}

ViewContext MultiViewAttention::bev(const Tensor& xh, const Tensor& b) const {
  if (b.rows() == 0) throw DomainError("BEV attention needs at least one key");
  return attend(bev_, bev_norm_, xh, b, nullptr);
}

ViewContext MultiViewAttention::temporal(const Tensor& xh, const Tensor& t, const Eigen::VectorXd& mask) const {
  if (mask.size() != t.rows()) throw DomainError("temporal attention: mask length mismatch");
  if (t.rows() == 0 || mask.sum() == 0.0) {
    ViewContext none;
    none.value = ag::zeros(1, dim_);
    none.weights = Matrix::Zero(1, t.rows());
    none.valid = false;
    return none;
  }
  return attend(temporal_, temporal_norm_, xh, t, &mask);
}

Tensor MultiViewAttention::aggregate(const Tensor& xs, const Tensor& xb, const Tensor& xt, const Tensor& xh) const {
  return aggregate_(ag::concat_cols({xs, xb, xt, xh}));
}

ContextToken MultiViewAttention::context(const Tensor& xh, const ViewContext& xs, const ViewContext& xb,
                                         const ViewContext& xt, int index) const {
  ContextToken c;
  c.value = aggregate(xs.value, xb.value, xt.value, xh);
  c.views = ag::concat_rows({c.value, xs.value, xb.value, xt.value});
  c.backdoor_index = index;
  c.temporal_valid = xt.valid;
  return c;
}

}  // namespace causaltraj
