#include "causaltraj/nn.hpp"

#include "causaltraj/errors.hpp"

#include <cmath>

namespace causaltraj::nn {

Tensor ParamStore::add(const std::string& name, Matrix init, const std::string& group) {
  if (params_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  Tensor t(std::move(init), true);
  params_.emplace(name, Entry{t, group, false});
  return t;
}

Tensor ParamStore::buffer(const std::string& name, Index rows, Index cols, double v, const std::string& group) {
  Tensor t = add(name, Matrix::Constant(rows, cols, v), group);
  t.set_requires_grad(false);
  params_.at(name).buffer = true;
  return t;
}

Tensor ParamStore::weight(const std::string& name, Index rows, Index cols, const std::string& group) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = u(rng_);
  return add(name, std::move(m), group);
}

Tensor ParamStore::zeros(const std::string& name, Index rows, Index cols, const std::string& group) {
  return add(name, Matrix::Zero(rows, cols), group);
}

Tensor ParamStore::constant(const std::string& name, Index rows, Index cols, double v, const std::string& group) {
  return add(name, Matrix::Constant(rows, cols, v), group);
}

Tensor ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second.tensor;
}

const std::string& ParamStore::group_of(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second.group;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [k, _] : params_) out.push_back(k);
  return out;
}

std::vector<Tensor> ParamStore::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [_, e] : params_)
    if (e.tensor.requires_grad()) out.push_back(e.tensor);
  return out;
}

std::vector<Tensor> ParamStore::in_group(const std::string& group) const {
  std::vector<Tensor> out;
  for (const auto& [_, e] : params_)
    if (e.group == group) out.push_back(e.tensor);
  return out;
}

void ParamStore::set_group_trainable(const std::string& group, bool trainable) {
  for (auto& [_, e] : params_)
    if (e.group == group && !e.buffer) {
      e.tensor.set_requires_grad(trainable);
      e.tensor.zero_grad();
    }
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : params_) e.tensor.zero_grad();
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : params_) n += static_cast<std::size_t>(e.tensor.value().size());
  return n;
}

std::uint64_t ParamStore::checksum(const std::string& group) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, e] : params_) {
    if (!group.empty() && e.group != group) continue;
    h = fnv1a(name.data(), name.size(), h);
    const Matrix& v = e.tensor.value();
    h = fnv1a(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), h);
  }
  return h;
}

void ParamStore::load_values(const std::map<std::string, Matrix>& values, const std::string& group) {
  for (auto& [name, e] : params_) {
    if (!group.empty() && e.group != group) continue;
    auto it = values.find(name);
    if (it == values.end()) continue;
    Matrix& dst = e.tensor.mutable_value();
    if (dst.rows() != it->second.rows() || dst.cols() != it->second.cols())
      throw ConfigError("parameter " + name + ": shape mismatch on load");
    dst = it->second;
  }
}

std::map<std::string, Matrix> ParamStore::values(const std::string& group) const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, e] : params_)
    if (group.empty() || e.group == group) out.emplace(name, e.tensor.value());
  return out;
}

Linear::Linear(ParamStore& store, const std::string& name, Index in, Index out, const std::string& group, bool bias)
    : weight_(store.weight(name + ".w", in, out, group)) {
  if (bias) bias_ = store.zeros(name + ".b", 1, out, group);
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = ag::matmul(x, weight_);
  return bias_.defined() ? y + bias_ : y;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, Index dim, const std::string& group)
    : gamma_(store.constant(name + ".gamma", 1, dim, 1.0, group)), beta_(store.zeros(name + ".beta", 1, dim, group)) {}

Tensor LayerNorm::operator()(const Tensor& x) const { return ag::layer_norm_rows(x, gamma_, beta_); }

Mlp::Mlp(ParamStore& store, const std::string& name, Index in, Index hidden, Index out, const std::string& group)
    : first_(store, name + ".0", in, hidden, group), second_(store, name + ".1", hidden, out, group) {}

Tensor Mlp::operator()(const Tensor& x) const { return second_(ag::silu(first_(x))); }

GruCell::GruCell(ParamStore& store, const std::string& name, Index in, Index hidden, const std::string& group)
    : input_(store, name + ".ih", in, 3 * hidden, group),
      state_(store, name + ".hh", hidden, 3 * hidden, group),
      hidden_(hidden) {}

Tensor GruCell::operator()(const Tensor& x, const Tensor& h) const {
  using namespace ag;
  Tensor gi = input_(x);
  Tensor gh = state_(h);
  Tensor r = sigmoid(slice_cols(gi, 0, hidden_) + slice_cols(gh, 0, hidden_));
  Tensor z = sigmoid(slice_cols(gi, hidden_, hidden_) + slice_cols(gh, hidden_, hidden_));
  Tensor n = ag::tanh(slice_cols(gi, 2 * hidden_, hidden_) + r * slice_cols(gh, 2 * hidden_, hidden_));
  // h' = n + z * (h - n)
  return n + z * (h - n);
}

Attention::Attention(ParamStore& store, const std::string& name, Index dim, int heads, const std::string& group,
                     bool output_projection)
    : query_(store, name + ".q", dim, dim, group, false),
      key_(store, name + ".k", dim, dim, group, false),
      value_(store, name + ".v", dim, dim, group, false),
      heads_(heads),
      has_output_(output_projection) {
  if (heads < 1 || dim % heads != 0) throw ConfigError(name + ": head count must divide the model dimension");
  if (output_projection) output_ = Linear(store, name + ".o", dim, dim, group);
}

AttentionResult Attention::operator()(const Tensor& query, const Tensor& keys, const Eigen::VectorXd* key_mask) const {
  if (key_mask && key_mask->size() != keys.rows()) throw DomainError("attention: key mask length mismatch");
  if (!key_mask) return attend(query, keys, nullptr);
  const Matrix mask = key_mask->transpose().replicate(query.rows(), 1);
  return attend(query, keys, &mask);
}

AttentionResult Attention::masked(const Tensor& query, const Tensor& keys, const Matrix& mask) const {
  if (mask.rows() != query.rows() || mask.cols() != keys.rows()) throw DomainError("attention: mask shape mismatch");
  return attend(query, keys, &mask);
}

AttentionResult Attention::attend(const Tensor& query, const Tensor& keys, const Matrix* mask) const {
  using namespace ag;
  const Index nk = keys.rows();
  const Index nq = query.rows();
  Tensor q = query_(query);
  Tensor k = key_(keys);
  Tensor v = value_(keys);
  const Index dim = q.cols();
  const Index dh = dim / heads_;

  std::vector<Tensor> head_out;
  Matrix weights = Matrix::Zero(nq, nk);
  for (int hd = 0; hd < heads_; ++hd) {
    Tensor qh = heads_ == 1 ? q : slice_cols(q, hd * dh, dh);
    Tensor kh = heads_ == 1 ? k : slice_cols(k, hd * dh, dh);
    Tensor vh = heads_ == 1 ? v : slice_cols(v, hd * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor w = softmax_rows(scores, mask);
    weights += w.value() / static_cast<double>(heads_);
    head_out.push_back(matmul(w, vh));
  }
  Tensor out = heads_ == 1 ? head_out[0] : concat_cols(std::span<const Tensor>(head_out));
  if (has_output_) out = output_(out);
  return {out, weights};
}

Matrix sinusoidal_embedding(double step, Index dim) {
  Matrix e(1, dim);
  const Index half = dim / 2;
  for (Index i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(std::max<Index>(half, 1)));
    e(0, i) = std::sin(step * freq);
    e(0, half + i) = std::cos(step * freq);
  }
  if (dim % 2) e(0, dim - 1) = 0.0;
  return e;
}

}  // namespace causaltraj::nn
