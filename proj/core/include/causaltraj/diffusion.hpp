#pragma once

// Denoising diffusion over spatial tokens: closed-form forward noising, an
// attention denoiser predicting the injected noise, ancestral reverse steps,
// and sampling of the backdoor token set.

#include "causaltraj/config.hpp"
#include "causaltraj/nn.hpp"
#include "causaltraj/rng.hpp"

#include <cstdint>
#include <vector>

namespace causaltraj {

using ag::Tensor;

/// Noise coefficients for steps j = 1..m (stored 0-based internally).
class DiffusionSchedule {
 public:
  DiffusionSchedule() = default;
  /// "cosine" (clipped at beta = 0.999) or "linear" (scaled to m steps).
  static DiffusionSchedule make(int steps, const std::string& kind = "cosine");
  static DiffusionSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double alpha_bar(int j) const;  // j in [0, m]; alpha_bar(0) = 1
  double beta(int j) const;       // j in [1, m]
  double alpha(int j) const { return 1.0 - beta(j); }
  /// beta_j (1 - alpha_bar_{j-1}) / (1 - alpha_bar_j).
  double posterior_variance(int j) const;

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

/// Noise predictor eps_theta(S_j, j).
class EpsilonModel {
 public:
  virtual ~EpsilonModel() = default;
  virtual Tensor predict(const Tensor& noised, int step) const = 0;
  /// Predicts for `noised` holding independent token sets of `rows_per_set`
  /// rows stacked vertically. The default splits and calls predict().
  virtual Tensor predict_sets(const Tensor& noised, int step, Index rows_per_set) const;
};

/// Pre-LN self-attention blocks over token rows with a sinusoidal step embedding.
class Denoiser : public EpsilonModel {
 public:
  Denoiser() = default;
  /// Tokens of width `dim` are lifted to `hidden` for the attention blocks.
  Denoiser(nn::ParamStore& store, int dim, int hidden, int blocks, int heads, const std::string& group = "diffusion");
  Tensor predict(const Tensor& noised, int step) const override;
  /// One pass with block-diagonal attention over the stacked sets.
  Tensor predict_sets(const Tensor& noised, int step, Index rows_per_set) const override;

 private:
  Tensor run(const Tensor& noised, int step, const Matrix* mask) const;

  struct Block {
    nn::LayerNorm norm1, norm2;
    nn::Attention attention;
    nn::Mlp ffn;
  };
  int hidden_ = 0;
  nn::Linear input_;
  nn::Linear step_;
  std::vector<Block> blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear output_;
};

/// sqrt(alpha_bar_j) S0 + sqrt(1 - alpha_bar_j) eps. Throws DomainError for j outside [1, m].
Tensor forward_noise(const Tensor& s0, int j, const Tensor& eps, const DiffusionSchedule& sched);
/// Same closed form with an explicit alpha_bar in (0, 1].
Matrix forward_noise_at(const Matrix& s0, double alpha_bar, const Matrix& eps);
/// Literal Markov chain S_k = sqrt(alpha_k) S_{k-1} + sqrt(beta_k) eps_k for k = 1..j.
Matrix forward_noise_stepwise(const Matrix& s0, int j, const std::vector<Matrix>& eps, const DiffusionSchedule& sched);

/// Estimate of S0 implied by a noise prediction at step j.
Matrix predict_start(const Matrix& noised, int j, const Matrix& eps_hat, const DiffusionSchedule& sched);

/// One ancestral step j -> j-1 using the posterior variance; no noise at j = 1.
/// With clip > 0 the implied start estimate is clamped to [-clip, clip]
/// before forming the posterior mean, which keeps the nearly singular late
/// steps (alpha_bar close to 0) from amplifying denoiser error.
/// Throws NumericalError if the model output is not finite.
Matrix denoise_step(const Matrix& noised, int j, const EpsilonModel& model, const DiffusionSchedule& sched, Rng& rng,
                    double clip = 0.0);

struct BackdoorSet {
  std::vector<Matrix> samples;  // n x (N_m x D)
  std::size_t size() const { return samples.size(); }
};

/// n independent reverse chains started from S^h noised to step m. Runs
/// without recording gradients.
BackdoorSet sample_backdoor_set(const Matrix& spatial_tokens, int n, const EpsilonModel& model,
                                const DiffusionSchedule& sched, std::uint64_t seed, double clip = 0.0);

enum class DiffusionNorm { Squared, L2 };
DiffusionNorm diffusion_norm_from_string(const std::string& s);

/// Mean over the batch of ||eps - eps_theta(S_j, j)|| (squared by default),
/// eps ~ N(0, I), j ~ U{1..m}. Throws DomainError for an empty batch.
Tensor diffusion_loss(const std::vector<Matrix>& batch, const EpsilonModel& model, const DiffusionSchedule& sched,
                      Rng& rng, DiffusionNorm norm = DiffusionNorm::Squared);

}  // namespace causaltraj
