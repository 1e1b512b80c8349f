#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tensor is a shared handle to a graph node. Operations evaluate eagerly
// and, when gradient recording is enabled and at least one operand requires
// a gradient, attach a backward closure to the result. `backward(loss)`
// walks the graph in reverse topological order. Graphs are freed when the
// last handle to their output goes away; parameter leaves persist.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace causaltraj {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

namespace ag {

struct Node {
  Matrix value;
  Matrix grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Matrix& g);
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false);
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return static_cast<bool>(node_); }
  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool has_grad() const { return node_->grad.size() > 0; }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.resize(0, 0); }

  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Gradient recording is per thread and on by default.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

Tensor constant(Matrix value);
Tensor zeros(Index rows, Index cols);
Tensor scalar(double v);
Tensor detach(const Tensor& t);

/// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be 1x1.
void backward(const Tensor& loss);

// Linear algebra and elementwise arithmetic. Binary elementwise ops accept
// equal shapes, a 1xC row broadcast over rows of the other operand, or a 1x1
// scalar broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor transpose(const Tensor& a);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);  // elementwise
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);

// Pointwise nonlinearities.
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor elu(const Tensor& a);
/// x * sigmoid(x); smooth, so finite-difference checks never straddle a kink.
Tensor silu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
/// sqrt(a + eps); eps keeps the derivative finite at zero.
Tensor sqrt(const Tensor& a, double eps = 0.0);
Tensor clamp_min(const Tensor& a, double lo);

// Reductions.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_rows(const Tensor& a);  // -> 1 x cols
Tensor sum_cols(const Tensor& a);  // -> rows x 1
Tensor mean_rows(const Tensor& a);

// Structure.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
Tensor concat_rows(std::initializer_list<Tensor> parts);
Tensor slice_rows(const Tensor& a, Index start, Index count);
Tensor slice_cols(const Tensor& a, Index start, Index count);
Tensor row(const Tensor& a, Index i);
/// Broadcasts a 1xC row to n x C.
Tensor repeat_rows(const Tensor& a, Index n);
/// Row-major flatten to 1 x (rows*cols).
Tensor flatten(const Tensor& a);

// Normalisation and attention helpers.
/// Row-wise softmax. `mask` (same shape, nonzero = keep) forces masked
/// entries to exactly zero probability; a fully masked row yields zeros.
Tensor softmax_rows(const Tensor& a, const Matrix* mask = nullptr);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Spatial operators on single-channel images stored as H x W matrices.
/// Zero-padded "same" cross-correlation with an odd k x k kernel.
Tensor conv2d_same(const Tensor& image, const Tensor& kernel);
/// Adaptive average pooling to out_rows x out_cols (bins as in torch).
Tensor adaptive_avg_pool(const Tensor& image, Index out_rows, Index out_cols);
/// Non-overlapping average pooling by an integer factor (trailing cells dropped).
Tensor avg_pool(const Tensor& image, Index factor);

}  // namespace ag
}  // namespace causaltraj
