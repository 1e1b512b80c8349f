#pragma once

// Structured configuration. The JSON file mirrors these structs:
//
//   {"model": {"encoders": {...}, "diffusion": {...}, "attention": {...},
//              "fusion": {...}, "decoder": {...}, "variant": "E"},
//    "train": {...}, "generator": {...}}
//
// Missing keys keep their defaults; unknown keys are a ConfigError so typos
// do not silently fall back.

#include "causaltraj/generator.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace causaltraj {

struct EncoderConfig {
  int dim = 32;  // D
  std::vector<int> kernel_sizes{3, 5, 7};
  int kernel_channels = 2;
  int pyramid_grid = 4;
  /// Average-pool factor applied to the BEV before the kernel pyramid.
  int bev_prepool = 4;
  int gat_heads = 1;
  /// Multiplies raw metric coordinates before they enter any network.
  double input_scale = 0.1;
};

struct DiffusionConfig {
  int steps = 50;  // m
  int samples = 4;  // n
  std::string schedule = "cosine";  // cosine | linear
  std::string norm = "squared";     // squared | l2
  int blocks = 2;
  int hidden = 32;  // denoiser width
  /// Reuse one backdoor set per scene instead of drawing fresh sets per batch.
  bool fixed_per_scene = false;
};

struct AttentionConfig {
  int heads = 1;
  double dropout = 0.0;
  bool residual = true;
};

struct FusionConfig {
  int t_rec = 3;
  int grid_rows = 13;  // longitudinal cells
  int grid_cols = 3;   // lateral cells
  double cell_size = 4.0;
  int fine_kernel = 3;
  int channels = 8;  // conv channels in both dual-scale branches
};

struct DecoderConfig {
  int maneuvers = 3;  // K
  int future_frames = 10;
  /// Means are position_scale times the raw head output, per frame.
  double position_scale = 3.0;
  double sigma_floor = 1e-3;
  /// Where Y = Y~ - Y~_c is taken: "token" (before the GRU) or "output".
  std::string combine = "token";
  /// Where the backdoor mean is taken: "token" or "output".
  std::string backdoor_average = "token";
};

enum class Variant { A, B, C, D, E };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

/// Architecture toggles implied by an ablation variant.
struct VariantToggles {
  bool bev = true;
  bool progressive = true;  // false: single-stage anchor (T_rec = 1)
  bool dual_scale = true;
  bool causal = true;       // backdoor adjustment and counterfactual branch
};
VariantToggles toggles_for(Variant v);

struct ModelConfig {
  EncoderConfig encoders;
  DiffusionConfig diffusion;
  AttentionConfig attention;
  FusionConfig fusion;
  DecoderConfig decoder;
  Variant variant = Variant::E;
  int history_frames = 8;  // t_h
  int state_width = 2;     // W_a
  int map_width = 4;       // W_m
};

enum class DatasetKind { Synthetic, NuscenesLike, ApolloscapeLike, HighwayLike };
const char* to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

struct LossWeight {
  double value = 1.0;
  bool learnable = false;
};

struct TrainConfig {
  int diffusion_steps = 500;
  int epochs = 8;
  int batch_size = 8;
  int max_steps = 0;  // 0 = epochs * batches
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  LossWeight lambda_0{1.0, false};
  LossWeight lambda_1{0.05, false};
  LossWeight lambda_int{1.0, false};
  LossWeight lambda_traj{1.0, false};
  DatasetKind dataset_kind = DatasetKind::Synthetic;
  /// Class weights (vehicle, pedestrian, bicycle) for apolloscape-like losses and metrics.
  std::vector<double> class_weights{0.2, 0.58, 0.22};
  /// Freeze the spatial encoder during the full-model stage.
  bool freeze_spatial = false;
  /// History-noise augmentation: each training scene is perturbed with this
  /// probability, alpha drawn from `augment_alphas`.
  double augment_probability = 0.0;
  std::vector<double> augment_alphas{1.0, 2.0};
};

struct Config {
  ModelConfig model;
  TrainConfig train;
  GeneratorConfig generator;
};

void validate(const ModelConfig& c);
void validate(const TrainConfig& c);
void validate(const Config& c);

Config config_from_json(const std::string& text);
Config load_config(const std::string& path);
std::string config_to_json(const Config& c, int indent = 2);

/// FNV-1a of the canonical (compact, key-sorted) JSON dump.
std::uint64_t fingerprint(const Config& c);
std::string fingerprint_hex(std::uint64_t fp);

}  // namespace causaltraj
