#include "causaltraj/decoder.hpp"

#include "causaltraj/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"

namespace causaltraj {

Matrix MixturePrediction::mode(int k) const {
  Matrix m(frames(), 5);
  m.col(0) = mu_x.value().row(k).transpose();
  m.col(1) = mu_y.value().row(k).transpose();
  m.col(2) = sigma_x.value().row(k).transpose();
  m.col(3) = sigma_y.value().row(k).transpose();
  m.col(4) = rho.value().row(k).transpose();
  return m;
}

Matrix MixturePrediction::means(int k) const {
  Matrix m(frames(), 2);
  m.col(0) = mu_x.value().row(k).transpose();
  m.col(1) = mu_y.value().row(k).transpose();
  return m;
}

void check_invariants(const MixturePrediction& p) {
  const Matrix* parts[] = {&p.probs.value(), &p.mu_x.value(), &p.mu_y.value(), &p.sigma_x.value(),
                           &p.sigma_y.value(), &p.rho.value()};
  for (const Matrix* m : parts)
    if (!m->allFinite()) throw NumericalError("decoder produced non-finite mixture parameters");
  if (p.probs.value().minCoeff() < 0 || std::abs(p.probs.value().sum() - 1.0) > 1e-6)
    throw DomainError("maneuver probabilities must be a distribution");
  if (p.sigma_x.value().minCoeff() <= 0 || p.sigma_y.value().minCoeff() <= 0)
    throw DomainError("sigma must be positive");
  if (p.rho.value().cwiseAbs().maxCoeff() >= 1.0) throw DomainError("rho must lie in (-1, 1)");
}

CausalDecoder::CausalDecoder(nn::ParamStore& store, int dim, const DecoderConfig& cfg, const std::string& g)
    : cfg_(cfg),
      compose_(store, g + ".compose", 2 * dim, dim, dim, g),
      gru_(store, g + ".gru", dim, dim, g),
      head_(store, g + ".head", dim, 5, g),
      logit_(store, g + ".logit", dim, 1, g) {}

CompositeToken CausalDecoder::compose(const AnchorQuery& q, const Tensor& g, TokenKind kind) const {
  if (g.rows() != 1 || g.cols() != q.values.cols()) throw DomainError("compose: fusion feature must be 1 x D");
  return CompositeToken{compose_(ag::concat_cols({q.values, ag::repeat_rows(g, q.values.rows())})), kind};
}

MixturePrediction CausalDecoder::decode(const Tensor& token) const {
  using namespace ag;
  if (!token.value().allFinite()) throw NumericalError("decoder input is not finite");
  const Index tf = cfg_.future_frames;
  Tensor h = zeros(token.rows(), token.cols());
  std::vector<Tensor> cols[5];
  for (Index t = 0; t < tf; ++t) {
    h = gru_(token, h);
    Tensor out = head_(h);
    for (int p = 0; p < 5; ++p) cols[p].push_back(slice_cols(out, p, 1));
  }
  auto stack = [&](int p) { return concat_cols(std::span<const Tensor>(cols[p])); };
  MixturePrediction pred;
  pred.mu_x = scale(stack(0), cfg_.position_scale);
  pred.mu_y = scale(stack(1), cfg_.position_scale);
  pred.sigma_x = add_scalar(softplus(stack(2)), cfg_.sigma_floor);
  pred.sigma_y = add_scalar(softplus(stack(3)), cfg_.sigma_floor);
  pred.rho = scale(ag::tanh(stack(4)), 0.999);
  pred.probs = softmax_rows(transpose(logit_(token)));
  check_invariants(pred);
  return pred;
}

CompositeToken backdoor_average(const std::vector<CompositeToken>& tokens) {
  if (tokens.empty()) throw DomainError("backdoor average of an empty set");
  std::vector<const CompositeToken*> order;
  for (const auto& t : tokens) {
    if (t.values.rows() != tokens[0].values.rows() || t.values.cols() != tokens[0].values.cols())
      throw DomainError("backdoor average: token shapes differ");
    order.push_back(&t);
  }
  auto less = [](const CompositeToken* a, const CompositeToken* b) {
    const Matrix &x = a->values.value(), &y = b->values.value();
    return std::lexicographical_compare(x.data(), x.data() + x.size(), y.data(), y.data() + y.size());
  };
  std::stable_sort(order.begin(), order.end(), less);
  Tensor sum = order[0]->values;
  for (std::size_t i = 1; i < order.size(); ++i) sum = sum + order[i]->values;
  return CompositeToken{ag::scale(sum, 1.0 / static_cast<double>(tokens.size())), tokens[0].kind};
}

CompositeToken causal_combine(const CompositeToken& f, const CompositeToken& c) {
  if (f.kind != TokenKind::Factual || c.kind != TokenKind::Counterfactual)
    throw UsageError("causal_combine expects a factual and a counterfactual token");
  return CompositeToken{f.values - c.values, TokenKind::Combined};
}

MixturePrediction average_predictions(const std::vector<MixturePrediction>& preds) {
  if (preds.empty()) throw DomainError("average of an empty prediction set");
  std::vector<const MixturePrediction*> order;
  for (const auto& p : preds) order.push_back(&p);
  std::stable_sort(order.begin(), order.end(), [](const MixturePrediction* a, const MixturePrediction* b) {
    const Matrix &x = a->mu_x.value(), &y = b->mu_x.value();
    return std::lexicographical_compare(x.data(), x.data() + x.size(), y.data(), y.data() + y.size());
  });
  const double w = 1.0 / static_cast<double>(preds.size());
  auto mean = [&](Tensor MixturePrediction::*field) {
    Tensor s = order[0]->*field;
    for (std::size_t i = 1; i < order.size(); ++i) s = s + order[i]->*field;
    return ag::scale(s, w);
  };
  MixturePrediction out;
  out.probs = mean(&MixturePrediction::probs);
  out.mu_x = mean(&MixturePrediction::mu_x);
  out.mu_y = mean(&MixturePrediction::mu_y);
  out.sigma_x = mean(&MixturePrediction::sigma_x);
  out.sigma_y = mean(&MixturePrediction::sigma_y);
  out.rho = mean(&MixturePrediction::rho);
  return out;
}

MixturePrediction combine_predictions(const MixturePrediction& f, const MixturePrediction& c) {
  MixturePrediction out = f;
  out.mu_x = f.mu_x - c.mu_x;
  out.mu_y = f.mu_y - c.mu_y;
  Tensor logits = ag::log(ag::clamp_min(f.probs, 1e-300)) - ag::log(ag::clamp_min(c.probs, 1e-300));
  out.probs = ag::softmax_rows(logits);
  return out;
}

Tensor mixture_nll(const MixturePrediction& p, const Matrix& gt, int k) {
  using namespace ag;
  if (k < 0 || k >= p.maneuvers()) throw DomainError("mixture_nll: maneuver index out of range");
  if (gt.rows() != p.frames() || gt.cols() < 2) throw DomainError("mixture_nll: ground truth must be t_f x 2");
  if (p.sigma_x.value().row(k).minCoeff() <= 0 || p.sigma_y.value().row(k).minCoeff() <= 0)
    throw DomainError("mixture_nll: sigma must be positive");
  Tensor sx = row(p.sigma_x, k), sy = row(p.sigma_y, k), r = row(p.rho, k);
  Tensor dx = div(constant(gt.col(0).transpose()) - row(p.mu_x, k), sx);
  Tensor dy = div(constant(gt.col(1).transpose()) - row(p.mu_y, k), sy);
  Tensor one_minus = add_scalar(neg(square(r)), 1.0);
  Tensor z = square(dx) + square(dy) - scale(r * dx * dy, 2.0);
  Tensor per_frame = log(sx) + log(sy) + scale(log(one_minus), 0.5) + scale(div(z, one_minus), 0.5);
  return add_scalar(sum(per_frame), std::log(2.0 * std::numbers::pi) * static_cast<double>(p.frames()));
}

double mixture_nll_full(const MixturePrediction& p, const Matrix& gt) {
  if (gt.rows() != p.frames() || gt.cols() < 2) throw DomainError("mixture_nll: ground truth must be t_f x 2");
  std::vector<double> terms;
  for (int k = 0; k < p.maneuvers(); ++k) {
    ag::NoGradGuard ng;
    const double pk = p.probs.value()(0, k);
    if (pk <= 0) continue;
    terms.push_back(std::log(pk) - mixture_nll(p, gt, k).value()(0, 0));
  }
  if (terms.empty()) return std::numeric_limits<double>::infinity();
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0;
  for (double t : terms) s += std::exp(t - m);
  return -(m + std::log(s));
}

std::string prediction_to_json(const MixturePrediction& p) {
  nlohmann::json j;
  j["probs"] = std::vector<double>(p.probs.value().data(), p.probs.value().data() + p.maneuvers());
  nlohmann::json modes = nlohmann::json::array();
  for (int k = 0; k < p.maneuvers(); ++k) {
    const Matrix m = p.mode(k);
    nlohmann::json frames = nlohmann::json::array();
    for (Index t = 0; t < m.rows(); ++t) frames.push_back({m(t, 0), m(t, 1), m(t, 2), m(t, 3), m(t, 4)});
    modes.push_back(std::move(frames));
  }
  j["modes"] = std::move(modes);
  return j.dump();
}

}  // namespace causaltraj
