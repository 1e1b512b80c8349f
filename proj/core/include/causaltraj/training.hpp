#pragma once

// Two-stage training. Stage 1 fits the denoiser on spatial tokens with the
// diffusion loss; stage 2 freezes it and fits everything else with
// L = l_int * L_int + l_traj * (l_0 * L_0 + l_1 * L_NLL).

#include "causaltraj/model.hpp"

#include <functional>

namespace causaltraj {

/// -log p[gt], with p[gt] clamped at 1e-12 (`clamped` reports when that happened).
Tensor intention_loss(const Tensor& probs, int gt, bool* clamped = nullptr);

/// L_0 for one scene, dispatched on the dataset kind:
///   nuscenes-like     minADE over all K modes
///   apolloscape-like  class weight of the target times the labelled-mode ADE
///   highway-like and synthetic  RMSE of the labelled mode
Tensor displacement_loss(const MixturePrediction& pred, const Matrix& gt, DatasetKind kind, int maneuver,
                         AgentClass cls, const std::vector<double>& class_weights);

/// l_0 * L_0 + l_1 * mixture_nll.
Tensor trajectory_loss(const MixturePrediction& pred, const Matrix& gt, DatasetKind kind, const Tensor& lambda_0,
                       const Tensor& lambda_1, int maneuver, AgentClass cls, const std::vector<double>& class_weights);

/// The four loss weights. Learnable ones are softplus(raw) parameters in the
/// "loss" group; fixed ones are constants.
class LossWeights {
 public:
  LossWeights(nn::ParamStore& store, const TrainConfig& cfg);
  Tensor lambda_0() const { return get(0); }
  Tensor lambda_1() const { return get(1); }
  Tensor lambda_int() const { return get(2); }
  Tensor lambda_traj() const { return get(3); }
  /// -sum log(lambda) over the learnable weights. Without it every learnable
  /// weight would be driven to zero; with it each settles at 1 / (its loss).
  Tensor regulariser() const;
  std::vector<double> values() const;

 private:
  Tensor get(int i) const;
  Tensor raw_[4];
  double fixed_[4] = {1, 1, 1, 1};
  bool learnable_[4] = {false, false, false, false};
};

struct SceneLoss {
  Tensor total;
  double intention = 0;
  double trajectory = 0;
};

/// Total stage-2 loss of one scene; the scene must carry a maneuver label.
SceneLoss scene_loss(const CausalTrajModel& model, const LossWeights& w, const TrainConfig& cfg, const Scene& s,
                     const BackdoorSet* backdoor, std::uint64_t seed);

struct StepLog {
  long step = 0;
  std::string stage;
  double loss = 0;
  double intention = 0;
  double trajectory = 0;
  double grad_norm = 0;
  /// Largest gradient norm seen on any "diffusion" parameter (stage 2 only).
  double diffusion_grad_norm = 0;
};

using StepCallback = std::function<void(const StepLog&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> log;
  std::vector<double> lambdas;  // final (l_0, l_1, l_int, l_traj)
};

/// Stage 1. Spatial tokens come from the model's current spatial encoder,
/// which is stored alongside the denoiser. Sets the sampling clip to 1.5x the
/// largest absolute token entry. Throws ConfigError on an empty dataset,
/// UsageError for variants without diffusion and NumericalError on divergence.
TrainResult train_diffusion(CausalTrajModel& model, const std::vector<Scene>& scenes, const Config& cfg,
                            const StepCallback& on_step = {});

/// Stage 2. Loads the spatial and diffusion groups from `diffusion_ckpt`
/// (required for causal variants, stage must be "diffusion"), freezes the
/// diffusion group and trains the rest. Verifies the diffusion checksum is
/// unchanged before returning.
TrainResult train_full(CausalTrajModel& model, const std::vector<Scene>& scenes, const Checkpoint* diffusion_ckpt,
                       const Config& cfg, const StepCallback& on_step = {});

/// CSV with header step,stage,loss,intention,trajectory,grad_norm,diffusion_grad_norm.
void write_log_csv(const std::vector<StepLog>& log, const std::string& path);

}  // namespace causaltraj
