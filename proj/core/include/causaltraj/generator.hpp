#pragma once

// Synthetic confounded crosswalk benchmark.
//
// The target drives along +x in its own lane, scene frame centred on its
// current position. Its maneuver follows a causal rule (stop for a pedestrian
// in the path, accelerate when slow, keep otherwise) corrupted by label noise.
// A crosswalk polyline is then attached so that "crosswalk present" agrees with
// "accelerate" in exactly round(rho * N) of the N scenes. The crosswalk lies
// beyond the BEV window, so only the vector map exposes the spurious cue.

#include "causaltraj/scene.hpp"

#include <cstdint>
#include <vector>

namespace causaltraj {

enum Maneuver : int { kKeep = 0, kAccelerate = 1, kStop = 2 };

struct GeneratorConfig {
  int train_scenes = 600;
  int test_scenes = 200;
  int history_frames = 8;  // t_h
  int future_frames = 10;  // t_f
  double dt = 0.5;
  double rho = 0.9;
  double label_noise = 0.35;
  double pedestrian_probability = 1.0 / 3.0;
  int polyline_points = 10;
  int bev_size = 64;
  double bev_resolution = 0.5;
  /// Overrides the initial speed range; used to build speed-shifted domains.
  double min_speed = 4.0;
  double max_speed = 12.0;
};

struct GeneratedDataset {
  std::vector<Scene> train;
  std::vector<Scene> test_iid;
  std::vector<Scene> test_shifted;
};

/// Throws ConfigError for rho outside [0, 1] or non-positive counts.
void validate(const GeneratorConfig& config);

GeneratedDataset generate_confounded_dataset(const GeneratorConfig& config, std::uint64_t seed);

/// One split of `count` scenes whose agreement rate is `rho`.
std::vector<Scene> generate_split(const GeneratorConfig& config, double rho, int count, std::uint64_t seed,
                                  const std::string& prefix);

bool has_crosswalk(const Scene& scene);
/// Fraction of scenes where crosswalk presence coincides with the accelerate label.
double cooccurrence_rate(const std::vector<Scene>& scenes);

/// Paints the three BEV layers from the scene's tracks and map.
BevRaster render_bev(const Scene& scene, int size, double resolution);

}  // namespace causaltraj
