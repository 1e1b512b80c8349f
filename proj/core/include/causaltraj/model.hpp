#pragma once

// The full predictor: encoders, diffusion backdoor sampling, multi-view
// attention, progressive and dual-scale fusion, and the causal decoder,
// switched per ablation variant.

#include "causaltraj/decoder.hpp"
#include "causaltraj/diffusion.hpp"
#include "causaltraj/encoders.hpp"

#include <optional>

namespace causaltraj {

/// Everything the forward pass produced, kept for losses and tests.
struct ModelOutput {
  MixturePrediction prediction;
  CompositeToken factual;         // Y~ after the backdoor mean
  CompositeToken counterfactual;  // Y~_c (empty tensor when the causal branch is off)
  Tensor decoder_input;
  std::vector<CompositeToken> factual_samples, counterfactual_samples;
  std::vector<ContextToken> contexts, counterfactual_contexts;
  std::vector<AnchorQuery> queries, counterfactual_queries;
  Tensor g, g_c;
};

class CausalTrajModel {
 public:
  explicit CausalTrajModel(const ModelConfig& cfg, std::uint64_t seed = 1);

  CausalTrajModel(const CausalTrajModel&) = delete;
  CausalTrajModel& operator=(const CausalTrajModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const VariantToggles& toggles() const { return toggles_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  int effective_t_rec() const { return toggles_.progressive ? cfg_.fusion.t_rec : 1; }

  /// S^h for a scene, without gradient.
  Matrix spatial_tokens(const Scene& s) const;
  /// n backdoor samples drawn from S^h with the stored clip.
  BackdoorSet sample_backdoor(const Scene& s, std::uint64_t seed) const;

  /// Runs the model. With the causal branch on, `backdoor` supplies the
  /// sample set; when null a fresh set is drawn from `seed`.
  ModelOutput forward(const Scene& s, const BackdoorSet* backdoor = nullptr, std::uint64_t seed = 0) const;

  const SpatialEncoder& spatial_encoder() const { return spatial_; }
  const TemporalEncoder& temporal_encoder() const { return temporal_; }
  const MultiViewAttention& attention() const { return attention_; }
  const ProgressiveFusion& fusion() const { return fusion_; }
  const DualScaleFusion& dual_scale() const { return dual_; }
  const CausalDecoder& decoder() const { return decoder_; }
  const Denoiser& denoiser() const { return denoiser_; }
  const DiffusionSchedule& schedule() const { return schedule_; }

  /// Clamp used on start estimates during sampling; stored as a buffer so it
  /// travels with the diffusion weights.
  double diffusion_clip() const;
  void set_diffusion_clip(double clip);

 private:
  ModelConfig cfg_;
  VariantToggles toggles_;
  nn::ParamStore store_;
  SpatialEncoder spatial_;
  TemporalEncoder temporal_;
  BevEncoder bev_;
  MultiViewAttention attention_;
  ProgressiveFusion fusion_;
  DualScaleFusion dual_;
  CausalDecoder decoder_;
  Denoiser denoiser_;
  DiffusionSchedule schedule_;
  Tensor clip_;
};

/// Serialised weights with a versioned header.
struct Checkpoint {
  static constexpr int kVersion = 1;
  std::string stage;  // "diffusion" | "full"
  long step = 0;
  std::uint64_t fingerprint = 0;
  std::string config_json;
  std::map<std::string, Matrix> weights;
};

Checkpoint make_checkpoint(const CausalTrajModel& model, const Config& cfg, const std::string& stage, long step);
std::string checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
/// Copies the checkpoint weights of `group` ("" = all) into the model.
void load_weights(CausalTrajModel& model, const Checkpoint& c, const std::string& group = "");

}  // namespace causaltraj
