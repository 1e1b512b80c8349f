#include "causaltraj/autograd.hpp"

#include "causaltraj/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace causaltraj::ag {

namespace {

thread_local bool t_grad_enabled = true;

using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Matrix value, std::initializer_list<Tensor> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (t_grad_enabled) {
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    if (needs) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& t : inputs) node->inputs.push_back(t.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

Tensor make_result_n(Matrix value, std::span<const Tensor> inputs, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (t_grad_enabled) {
    bool needs = false;
    for (const auto& t : inputs) needs = needs || t.requires_grad();
    if (needs) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const auto& t : inputs) node->inputs.push_back(t.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Tensor(std::move(node));
}

void push(Node& self, std::size_t i, const Matrix& g) {
  Node& in = *self.inputs[i];
  if (in.requires_grad) in.accumulate(g);
}

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// Output shape of a broadcasting binary op.
std::pair<Index, Index> broadcast_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return {a.rows(), a.cols()};
  auto fits = [](const Matrix& small, const Matrix& big) {
    return (small.rows() == 1 && small.cols() == 1) || (small.rows() == 1 && small.cols() == big.cols());
  };
  if (fits(b, a)) return {a.rows(), a.cols()};
  if (fits(a, b)) return {b.rows(), b.cols()};
  throw DomainError(std::string(op) + ": incompatible shapes " + shape(a) + " and " + shape(b));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  if (m.rows() == 1 && m.cols() == 1) return Matrix::Constant(rows, cols, m(0, 0));
  return m.replicate(rows, 1);
}

Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  return g.colwise().sum();
}

template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  Matrix out = a.value().unaryExpr(fwd);
  Matrix in = a.value();
  Matrix outc = out;
  return make_result(std::move(out), {a}, [in = std::move(in), outc = std::move(outc), deriv](Node& self) {
    Matrix g = self.grad.array() * in.binaryExpr(outc, deriv).array();
    push(self, 0, g);
  });
}

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0)
    grad = g;
  else
    grad += g;
}

Tensor::Tensor(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

double Tensor::item() const {
  if (rows() != 1 || cols() != 1) throw DomainError("item() on non-scalar tensor " + shape(value()));
  return value()(0, 0);
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor constant(Matrix value) { return Tensor(std::move(value), false); }
Tensor zeros(Index rows, Index cols) { return constant(Matrix::Zero(rows, cols)); }
Tensor scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }
Tensor detach(const Tensor& t) { return constant(t.value()); }

void backward(const Tensor& loss) {
  if (loss.rows() != 1 || loss.cols() != 1) throw DomainError("backward() needs a scalar loss");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() > 0) n->backward_fn(*n);
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DomainError("matmul: incompatible shapes " + shape(a.value()) + " and " + shape(b.value()));
  Matrix out = a.value() * b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Matrix& av = self.inputs[0]->value;
    const Matrix& bv = self.inputs[1]->value;
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad * bv.transpose());
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(av.transpose() * self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  auto [r, c] = broadcast_shape(a.value(), b.value(), "add");
  Matrix out = expand(a.value(), r, c) + expand(b.value(), r, c);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t i = 0; i < 2; ++i) {
      Node& in = *self.inputs[i];
      if (in.requires_grad) in.accumulate(reduce_to(self.grad, in.value.rows(), in.value.cols()));
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  auto [r, c] = broadcast_shape(a.value(), b.value(), "sub");
  Matrix out = expand(a.value(), r, c) - expand(b.value(), r, c);
  return make_result(std::move(out), {a, b}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(reduce_to(self.grad, x.value.rows(), x.value.cols()));
    if (y.requires_grad) y.accumulate(-reduce_to(self.grad, y.value.rows(), y.value.cols()));
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  auto [r, c] = broadcast_shape(a.value(), b.value(), "mul");
  Matrix ae = expand(a.value(), r, c);
  Matrix be = expand(b.value(), r, c);
  Matrix out = ae.cwiseProduct(be);
  return make_result(std::move(out), {a, b}, [ae = std::move(ae), be = std::move(be)](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(reduce_to(self.grad.cwiseProduct(be), x.value.rows(), x.value.cols()));
    if (y.requires_grad) y.accumulate(reduce_to(self.grad.cwiseProduct(ae), y.value.rows(), y.value.cols()));
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  auto [r, c] = broadcast_shape(a.value(), b.value(), "div");
  Matrix ae = expand(a.value(), r, c);
  Matrix be = expand(b.value(), r, c);
  Matrix out = ae.cwiseQuotient(be);
  return make_result(std::move(out), {a, b}, [ae = std::move(ae), be = std::move(be)](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(reduce_to(self.grad.cwiseQuotient(be), x.value.rows(), x.value.cols()));
    if (y.requires_grad) {
      Matrix g = -(self.grad.array() * ae.array() / be.array().square()).matrix();
      y.accumulate(reduce_to(g, y.value.rows(), y.value.cols()));
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  Matrix out = a.value() * s;
  return make_result(std::move(out), {a}, [s](Node& self) { push(self, 0, self.grad * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  Matrix out = a.value().array() + s;
  return make_result(std::move(out), {a}, [](Node& self) { push(self, 0, self.grad); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return make_result(std::move(out), {a}, [](Node& self) { push(self, 0, self.grad.transpose()); });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0 ? x : slope * x; },
      [slope](double x, double) { return x > 0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0 ? x : std::expm1(x); }, [](double x, double y) { return x > 0 ? 1.0 : y + 1.0; });
}

Tensor silu(const Tensor& a) {
  return unary(
      a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a, double eps) {
  return unary(
      a, [eps](double x) { return std::sqrt(x + eps); },
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary(
      a, [lo](double x) { return x < lo ? lo : x; }, [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Tensor sum(const Tensor& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return make_result(std::move(out), {a}, [](Node& self) {
    const Node& in = *self.inputs[0];
    push(self, 0, Matrix::Constant(in.value.rows(), in.value.cols(), self.grad(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DomainError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Tensor sum_rows(const Tensor& a) {
  Matrix out = a.value().colwise().sum();
  return make_result(std::move(out), {a}, [](Node& self) {
    push(self, 0, self.grad.replicate(self.inputs[0]->value.rows(), 1));
  });
}

Tensor sum_cols(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  return make_result(std::move(out), {a}, [](Node& self) {
    push(self, 0, self.grad.replicate(1, self.inputs[0]->value.cols()));
  });
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw DomainError("mean_rows of empty tensor");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DomainError("concat_cols: no inputs");
  const Index r = parts[0].rows();
  Index c = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw DomainError("concat_cols: row mismatch");
    c += p.cols();
  }
  Matrix out(r, c);
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }
  return make_result_n(std::move(out), parts, [](Node& self) {
    Index o = 0;
    for (auto& in : self.inputs) {
      const Index w = in->value.cols();
      if (in->requires_grad) in->accumulate(self.grad.middleCols(o, w));
      o += w;
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DomainError("concat_rows: no inputs");
  const Index c = parts[0].cols();
  Index r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) throw DomainError("concat_rows: column mismatch");
    r += p.rows();
  }
  Matrix out(r, c);
  Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    off += p.rows();
  }
  return make_result_n(std::move(out), parts, [](Node& self) {
    Index o = 0;
    for (auto& in : self.inputs) {
      const Index h = in->value.rows();
      if (in->requires_grad) in->accumulate(self.grad.middleRows(o, h));
      o += h;
    }
  });
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_rows(std::initializer_list<Tensor> parts) {
  return concat_rows(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor slice_rows(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw DomainError("slice_rows out of range");
  Matrix out = a.value().middleRows(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    Node& in = *self.inputs[0];
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    g.middleRows(start, count) = self.grad;
    in.accumulate(g);
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw DomainError("slice_cols out of range");
  Matrix out = a.value().middleCols(start, count);
  return make_result(std::move(out), {a}, [start, count](Node& self) {
    Node& in = *self.inputs[0];
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    g.middleCols(start, count) = self.grad;
    in.accumulate(g);
  });
}

Tensor row(const Tensor& a, Index i) { return slice_rows(a, i, 1); }

Tensor repeat_rows(const Tensor& a, Index n) {
  if (a.rows() != 1) throw DomainError("repeat_rows expects a single row");
  Matrix out = a.value().replicate(n, 1);
  return make_result(std::move(out), {a}, [](Node& self) { push(self, 0, self.grad.colwise().sum()); });
}

Tensor flatten(const Tensor& a) {
  const Index r = a.rows();
  const Index c = a.cols();
  Matrix out(1, r * c);
  for (Index i = 0; i < r; ++i) out.middleCols(i * c, c) = a.value().row(i);
  return make_result(std::move(out), {a}, [r, c](Node& self) {
    Matrix g(r, c);
    for (Index i = 0; i < r; ++i) g.row(i) = self.grad.middleCols(i * c, c);
    push(self, 0, g);
  });
}

Tensor softmax_rows(const Tensor& a, const Matrix* mask) {
  const Matrix& v = a.value();
  if (mask && (mask->rows() != v.rows() || mask->cols() != v.cols()))
    throw DomainError("softmax_rows: mask shape mismatch");
  Matrix out = Matrix::Zero(v.rows(), v.cols());
  for (Index i = 0; i < v.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < v.cols(); ++j)
      if (!mask || (*mask)(i, j) != 0.0) mx = std::max(mx, v(i, j));
    if (!std::isfinite(mx)) continue;  // fully masked row stays zero
    double z = 0.0;
    for (Index j = 0; j < v.cols(); ++j) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      out(i, j) = std::exp(v(i, j) - mx);
      z += out(i, j);
    }
    out.row(i) /= z;
  }
  Matrix y = out;
  return make_result(std::move(out), {a}, [y = std::move(y)](Node& self) {
    // dx = y * (g - sum(g*y)) per row; masked entries have y = 0.
    Matrix g = self.grad;
    Eigen::VectorXd dots = (g.cwiseProduct(y)).rowwise().sum();
    Matrix dx = y.cwiseProduct(g - dots.replicate(1, g.cols()));
    push(self, 0, dx);
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  const Matrix& v = a.value();
  Matrix out(v.rows(), v.cols());
  for (Index i = 0; i < v.rows(); ++i) {
    const double mx = v.row(i).maxCoeff();
    const double lse = mx + std::log((v.row(i).array() - mx).exp().sum());
    out.row(i) = v.row(i).array() - lse;
  }
  Matrix sm = out.array().exp();
  return make_result(std::move(out), {a}, [sm = std::move(sm)](Node& self) {
    Eigen::VectorXd gs = self.grad.rowwise().sum();
    Matrix dx = self.grad - sm.cwiseProduct(gs.replicate(1, sm.cols()));
    push(self, 0, dx);
  });
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Matrix& v = x.value();
  const Index n = v.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n)
    throw DomainError("layer_norm_rows: parameter shape mismatch");
  Matrix xhat(v.rows(), n);
  Eigen::VectorXd inv_std(v.rows());
  for (Index i = 0; i < v.rows(); ++i) {
    const double mu = v.row(i).mean();
    const double var = (v.row(i).array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (v.row(i).array() - mu) * inv_std(i);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
  return make_result(
      std::move(out), {x, gamma, beta}, [xhat = std::move(xhat), inv_std = std::move(inv_std), n](Node& self) {
        const Matrix& g = self.grad;
        Node& xin = *self.inputs[0];
        Node& gin = *self.inputs[1];
        Node& bin = *self.inputs[2];
        if (gin.requires_grad) gin.accumulate(g.cwiseProduct(xhat).colwise().sum());
        if (bin.requires_grad) bin.accumulate(g.colwise().sum());
        if (xin.requires_grad) {
          Matrix gx = g.array().rowwise() * gin.value.row(0).array();
          Matrix dx(g.rows(), n);
          for (Index i = 0; i < g.rows(); ++i) {
            const double m1 = gx.row(i).mean();
            const double m2 = gx.row(i).cwiseProduct(xhat.row(i)).mean();
            dx.row(i) = inv_std(i) * (gx.row(i).array() - m1 - xhat.row(i).array() * m2);
          }
          xin.accumulate(dx);
        }
      });
}

namespace {

// out(i,j) = sum_{a,b} img(i+a-p, j+b-p) * ker(a,b), zero padding.
Matrix correlate_same(const Matrix& img, const Matrix& ker) {
  const Index h = img.rows();
  const Index w = img.cols();
  const Index k = ker.rows();
  const Index p = k / 2;
  Matrix out = Matrix::Zero(h, w);
  for (Index a = 0; a < k; ++a) {
    const Index i0 = std::max<Index>(0, p - a);
    const Index i1 = std::min<Index>(h, h + p - a);
    if (i1 <= i0) continue;
    for (Index b = 0; b < k; ++b) {
      const Index j0 = std::max<Index>(0, p - b);
      const Index j1 = std::min<Index>(w, w + p - b);
      if (j1 <= j0) continue;
      out.block(i0, j0, i1 - i0, j1 - j0) += ker(a, b) * img.block(i0 + a - p, j0 + b - p, i1 - i0, j1 - j0);
    }
  }
  return out;
}

struct Bin {
  Index begin;
  Index end;
};

std::vector<Bin> adaptive_bins(Index in, Index out) {
  std::vector<Bin> bins(static_cast<std::size_t>(out));
  for (Index o = 0; o < out; ++o) {
    bins[o].begin = (o * in) / out;
    bins[o].end = ((o + 1) * in + out - 1) / out;
  }
  return bins;
}

}  // namespace

Tensor conv2d_same(const Tensor& image, const Tensor& kernel) {
  const Index k = kernel.rows();
  if (k != kernel.cols() || k % 2 == 0) throw DomainError("conv2d_same: kernel must be odd and square");
  Matrix out = correlate_same(image.value(), kernel.value());
  return make_result(std::move(out), {image, kernel}, [k](Node& self) {
    Node& img = *self.inputs[0];
    Node& ker = *self.inputs[1];
    const Matrix& g = self.grad;
    const Index p = k / 2;
    const Index h = g.rows();
    const Index w = g.cols();
    if (img.requires_grad) {
      // Adjoint of correlation is correlation with the flipped kernel.
      Matrix flipped = ker.value.reverse();
      img.accumulate(correlate_same(g, flipped));
    }
    if (ker.requires_grad) {
      Matrix gk = Matrix::Zero(k, k);
      for (Index a = 0; a < k; ++a) {
        const Index i0 = std::max<Index>(0, p - a);
        const Index i1 = std::min<Index>(h, h + p - a);
        if (i1 <= i0) continue;
        for (Index b = 0; b < k; ++b) {
          const Index j0 = std::max<Index>(0, p - b);
          const Index j1 = std::min<Index>(w, w + p - b);
          if (j1 <= j0) continue;
          gk(a, b) = g.block(i0, j0, i1 - i0, j1 - j0)
                         .cwiseProduct(img.value.block(i0 + a - p, j0 + b - p, i1 - i0, j1 - j0))
                         .sum();
        }
      }
      ker.accumulate(gk);
    }
  });
}

Tensor adaptive_avg_pool(const Tensor& image, Index out_rows, Index out_cols) {
  const Matrix& v = image.value();
  if (out_rows <= 0 || out_cols <= 0 || v.rows() < out_rows || v.cols() < out_cols)
    throw DomainError("adaptive_avg_pool: output grid larger than input");
  auto rb = adaptive_bins(v.rows(), out_rows);
  auto cb = adaptive_bins(v.cols(), out_cols);
  Matrix out(out_rows, out_cols);
  for (Index i = 0; i < out_rows; ++i)
    for (Index j = 0; j < out_cols; ++j) {
      const auto& r = rb[i];
      const auto& c = cb[j];
      out(i, j) = v.block(r.begin, c.begin, r.end - r.begin, c.end - c.begin).mean();
    }
  return make_result(std::move(out), {image}, [rb, cb](Node& self) {
    Node& in = *self.inputs[0];
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    for (std::size_t i = 0; i < rb.size(); ++i)
      for (std::size_t j = 0; j < cb.size(); ++j) {
        const auto& r = rb[i];
        const auto& c = cb[j];
        const Index nr = r.end - r.begin;
        const Index nc = c.end - c.begin;
        g.block(r.begin, c.begin, nr, nc).array() += self.grad(i, j) / static_cast<double>(nr * nc);
      }
    in.accumulate(g);
  });
}

Tensor avg_pool(const Tensor& image, Index factor) {
  if (factor < 1) throw DomainError("avg_pool: factor must be >= 1");
  if (factor == 1) return image;
  const Index oh = image.rows() / factor;
  const Index ow = image.cols() / factor;
  if (oh == 0 || ow == 0) throw DomainError("avg_pool: factor larger than image");
  Matrix out(oh, ow);
  for (Index i = 0; i < oh; ++i)
    for (Index j = 0; j < ow; ++j) out(i, j) = image.value().block(i * factor, j * factor, factor, factor).mean();
  return make_result(std::move(out), {image}, [factor, oh, ow](Node& self) {
    Node& in = *self.inputs[0];
    Matrix g = Matrix::Zero(in.value.rows(), in.value.cols());
    const double inv = 1.0 / static_cast<double>(factor * factor);
    for (Index i = 0; i < oh; ++i)
      for (Index j = 0; j < ow; ++j) g.block(i * factor, j * factor, factor, factor).array() += self.grad(i, j) * inv;
    in.accumulate(g);
  });
}

}  // namespace causaltraj::ag
