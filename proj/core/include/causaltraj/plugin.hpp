#pragma once

// Plug-and-play causal wrapper. Any predictor that maps (scene, spatial
// tokens) to a context and a context to a mixture can be run once per
// backdoor sample, averaged, and corrected by its zero-history
// counterfactual.

#include "causaltraj/metrics.hpp"

namespace causaltraj {

class BaselinePredictor {
 public:
  virtual ~BaselinePredictor() = default;
  /// Factual spatial tokens S^h (N_m x D) of a scene.
  virtual Matrix spatial_tokens(const Scene& s) const = 0;
  /// Context vector (1 x C) for the scene with `spatial` standing in for S^h.
  virtual Tensor encode(const Scene& s, const Tensor& spatial) const = 0;
  virtual MixturePrediction decode(const Tensor& context) const = 0;
  /// False when the context cannot be combined arithmetically; the wrapper
  /// then combines in output space.
  virtual bool exposes_context() const { return true; }
  virtual int history_frames() const = 0;
  virtual int future_frames() const = 0;

  MixturePrediction predict(const Scene& s) const { return decode(encode(s, ag::constant(spatial_tokens(s)))); }
};

/// Constant-velocity extrapolation plus a learned residual. The context is
/// [v_x, v_y, history features, map features]; the velocity and history
/// parts are bias-free, so a zero history maps to zeros there.
class ReferenceBaseline : public BaselinePredictor {
 public:
  ReferenceBaseline(nn::ParamStore& store, const ModelConfig& cfg, double dt, const std::string& group = "baseline");

  Matrix spatial_tokens(const Scene& s) const override;
  Tensor encode(const Scene& s, const Tensor& spatial) const override;
  MixturePrediction decode(const Tensor& context) const override;
  int history_frames() const override { return cfg_.history_frames; }
  int future_frames() const override { return cfg_.decoder.future_frames; }

 private:
  ModelConfig cfg_;
  double dt_;
  SpatialEncoder spatial_;  // group "spatial", shared with the diffusion checkpoint
  nn::Linear history_;
  nn::Linear map_;
  nn::Mlp residual_;
  nn::Mlp spread_;
  nn::Linear logits_;
};

enum class CombineSpace { Auto, Context, Output };

struct WrappedOutput {
  MixturePrediction prediction;
  Tensor factual;         // backdoor mean of factual contexts (context space)
  Tensor counterfactual;  // backdoor mean of counterfactual contexts
};

class CausalWrapped {
 public:
  /// The denoiser and schedule must outlive the wrapper. UsageError when n < 1
  /// or the baseline's spatial token width differs from `dim`.
  CausalWrapped(const BaselinePredictor& baseline, const EpsilonModel& denoiser, const DiffusionSchedule& schedule,
                double clip, int dim, int n, CombineSpace space = CombineSpace::Auto);

  /// Draws n backdoor samples from the baseline's spatial tokens.
  BackdoorSet sample(const Scene& s, std::uint64_t seed) const;
  WrappedOutput forward(const Scene& s, const BackdoorSet& set) const;
  WrappedOutput forward(const Scene& s, std::uint64_t seed) const { return forward(s, sample(s, seed)); }
  MixturePrediction predict(const Scene& s, std::uint64_t seed) const { return forward(s, seed).prediction; }
  int samples() const { return n_; }
  const BaselinePredictor& baseline() const { return *baseline_; }

 private:
  const BaselinePredictor* baseline_;
  const EpsilonModel* denoiser_;
  const DiffusionSchedule* schedule_;
  double clip_;
  int dim_;
  int n_;
  CombineSpace space_;
};

/// Owns the denoiser restored from a diffusion checkpoint. The baseline's
/// spatial encoder should have been loaded from the same checkpoint.
class DiffusionBundle {
 public:
  explicit DiffusionBundle(const Checkpoint& diffusion_ckpt);
  const Denoiser& denoiser() const { return denoiser_; }
  const DiffusionSchedule& schedule() const { return schedule_; }
  double clip() const { return clip_; }
  int dim() const { return dim_; }

 private:
  nn::ParamStore store_;
  Denoiser denoiser_;
  DiffusionSchedule schedule_;
  double clip_ = 0;
  int dim_ = 0;
};

CausalWrapped wrap(const BaselinePredictor& baseline, const DiffusionBundle& diffusion, int n,
                   CombineSpace space = CombineSpace::Auto);

/// Stage-2 style training of any predictor function with the usual losses.
/// `params` are the tensors to optimise.
using TrainForward = std::function<MixturePrediction(const Scene&, std::uint64_t)>;
std::vector<StepLog> train_predictor(const TrainForward& forward, std::vector<Tensor> params,
                                     const std::vector<Scene>& scenes, const TrainConfig& cfg);

}  // namespace causaltraj
