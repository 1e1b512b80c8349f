#pragma once

#include "causaltraj/autograd.hpp"

#include <vector>

namespace causaltraj::optim {

/// Adaptive-moment gradient descent over a fixed parameter list.
class Adam {
 public:
  struct Options {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(std::vector<ag::Tensor> params, Options options);

  /// Applies one update from the accumulated gradients. Parameters without a
  /// gradient are left untouched.
  void step();
  void zero_grad();
  long steps() const { return steps_; }

 private:
  std::vector<ag::Tensor> params_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  Options options_;
  long steps_ = 0;
};

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clipping norm.
double clip_grad_norm(std::vector<ag::Tensor>& params, double max_norm);

}  // namespace causaltraj::optim
