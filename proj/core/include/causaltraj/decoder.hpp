#pragma once

// Causal decoder: composite tokens from (query, fusion feature), the
// backdoor mean over samples, the factual minus counterfactual combination,
// and a recurrent rollout into a maneuver mixture of bivariate Gaussians.

#include "causaltraj/fusion.hpp"

#include <string>

namespace causaltraj {

enum class TokenKind { Factual, Counterfactual, Combined };

struct CompositeToken {
  Tensor values;  // K x D
  TokenKind kind = TokenKind::Factual;
};

struct MixturePrediction {
  Tensor probs;  // 1 x K
  // K x t_f each
  Tensor mu_x, mu_y, sigma_x, sigma_y, rho;

  int maneuvers() const { return static_cast<int>(mu_x.rows()); }
  int frames() const { return static_cast<int>(mu_x.cols()); }
  /// t_f x 5 rows of (mu_x, mu_y, sigma_x, sigma_y, rho) for mode k.
  Matrix mode(int k) const;
  /// t_f x 2 means of mode k.
  Matrix means(int k) const;
  Eigen::VectorXd probabilities() const { return probs.value().row(0).transpose(); }
};

/// Throws NumericalError when any parameter is non-finite and DomainError
/// when a documented range is violated.
void check_invariants(const MixturePrediction& p);

class CausalDecoder {
 public:
  CausalDecoder() = default;
  CausalDecoder(nn::ParamStore& store, int dim, const DecoderConfig& cfg, const std::string& group = "decoder");

  /// Per-maneuver [Q_k, G] projected to D by a two-layer MLP shared by the
  /// factual and counterfactual branches.
  CompositeToken compose(const AnchorQuery& q, const Tensor& g, TokenKind kind) const;
  MixturePrediction decode(const Tensor& token) const;

 private:
  DecoderConfig cfg_;
  nn::Mlp compose_;
  nn::GruCell gru_;
  nn::Linear head_;
  nn::Linear logit_;
};

/// Mean of the tokens, summed in a canonical (lexicographic) order so the
/// result does not depend on the order of the backdoor set.
CompositeToken backdoor_average(const std::vector<CompositeToken>& tokens);
/// Y = Y~ - Y~_c. Throws UsageError unless the kinds are factual and counterfactual.
CompositeToken causal_combine(const CompositeToken& factual, const CompositeToken& counterfactual);

/// Output-space alternatives: the per-parameter mean of n predictions, and
/// factual means minus counterfactual means with factual spreads and
/// probabilities proportional to p / p_c.
MixturePrediction average_predictions(const std::vector<MixturePrediction>& preds);
MixturePrediction combine_predictions(const MixturePrediction& factual, const MixturePrediction& counterfactual);

/// Sum over frames of the bivariate-Gaussian negative log-likelihood of `gt`
/// (t_f x 2) under mode `maneuver`.
Tensor mixture_nll(const MixturePrediction& pred, const Matrix& gt, int maneuver);
/// -log sum_k p_k prod_t N(gt_t; mode k), evaluated with log-sum-exp.
double mixture_nll_full(const MixturePrediction& pred, const Matrix& gt);

/// {"probs": [...], "modes": [[[mx, my, sx, sy, rho], ...], ...]}
std::string prediction_to_json(const MixturePrediction& pred);

}  // namespace causaltraj
