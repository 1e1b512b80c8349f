#pragma once

// Parameter storage and the small set of layers the model is built from.

#include "causaltraj/autograd.hpp"
#include "causaltraj/rng.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace causaltraj::nn {

using ag::Tensor;

/// Named, grouped parameters. Groups ("spatial", "diffusion", ...) are the
/// unit of freezing and checksumming. Iteration order is by name.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  /// Glorot-uniform initialised weight.
  Tensor weight(const std::string& name, Index rows, Index cols, const std::string& group);
  Tensor zeros(const std::string& name, Index rows, Index cols, const std::string& group);
  Tensor constant(const std::string& name, Index rows, Index cols, double v, const std::string& group);
  /// Stored and checksummed like a parameter but never trainable.
  Tensor buffer(const std::string& name, Index rows, Index cols, double v, const std::string& group);

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Tensor get(const std::string& name) const;
  const std::string& group_of(const std::string& name) const;

  std::vector<std::string> names() const;
  std::vector<Tensor> trainable() const;
  std::vector<Tensor> in_group(const std::string& group) const;

  void set_group_trainable(const std::string& group, bool trainable);
  void zero_grad();
  std::size_t parameter_count() const;

  /// FNV-1a over the raw bytes of every parameter in `group` ("" = all).
  std::uint64_t checksum(const std::string& group = "") const;

  /// Copies values for every name present in both stores; shapes must agree.
  void load_values(const std::map<std::string, Matrix>& values, const std::string& group = "");
  std::map<std::string, Matrix> values(const std::string& group = "") const;

 private:
  struct Entry {
    Tensor tensor;
    std::string group;
    bool buffer = false;
  };
  Tensor add(const std::string& name, Matrix init, const std::string& group);

  std::map<std::string, Entry> params_;
  Rng rng_;
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Index in, Index out, const std::string& group, bool bias = true);
  Tensor operator()(const Tensor& x) const;
  Index in_features() const { return weight_.rows(); }
  Index out_features() const { return weight_.cols(); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Index dim, const std::string& group);
  Tensor operator()(const Tensor& x) const;

 private:
  Tensor gamma_;
  Tensor beta_;
};

/// Two-layer perceptron with a SiLU in between.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, Index in, Index hidden, Index out, const std::string& group);
  Tensor operator()(const Tensor& x) const;

 private:
  Linear first_;
  Linear second_;
};

/// Gated recurrent cell (reset/update/new gates, PyTorch layout).
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamStore& store, const std::string& name, Index in, Index hidden, const std::string& group);

  /// x: N x in, h: N x hidden -> N x hidden.
  Tensor operator()(const Tensor& x, const Tensor& h) const;
  Index hidden() const { return hidden_; }

 private:
  Linear input_;
  Linear state_;
  Index hidden_ = 0;
};

struct AttentionResult {
  Tensor output;   // Nq x D
  Matrix weights;  // Nq x Nk, averaged over heads
};

/// Scaled dot-product attention with learned projections.
class Attention {
 public:
  Attention() = default;
  Attention(ParamStore& store, const std::string& name, Index dim, int heads, const std::string& group,
            bool output_projection = true);

  /// `key_mask` is a length-Nk 0/1 vector (nullptr = all keys valid).
  AttentionResult operator()(const Tensor& query, const Tensor& keys, const Eigen::VectorXd* key_mask = nullptr) const;
  /// Full Nq x Nk 0/1 mask, e.g. block-diagonal to run independent sets in one call.
  AttentionResult masked(const Tensor& query, const Tensor& keys, const Matrix& mask) const;

  const Linear& value_projection() const { return value_; }
  const Linear* output_projection() const { return has_output_ ? &output_ : nullptr; }

 private:
  AttentionResult attend(const Tensor& query, const Tensor& keys, const Matrix* mask) const;

  Linear query_;
  Linear key_;
  Linear value_;
  Linear output_;
  int heads_ = 1;
  bool has_output_ = true;
};

/// Sinusoidal embedding of an integer step, 1 x dim.
Matrix sinusoidal_embedding(double step, Index dim);

}  // namespace causaltraj::nn
