#pragma once

// Robustness perturbations applied to observed history only.

#include "causaltraj/scene.hpp"

#include <cstdint>
#include <string>

namespace causaltraj {

struct PerturbationSpec {
  enum class Kind { None, Noise, FrameDrop };
  Kind kind = Kind::None;
  double alpha = 0.0;
  double drop_fraction = 0.0;
  int delta_t = 1;
  std::uint64_t seed = 0;

  /// Short label such as "clean", "noise-a8" or "drop-0.4".
  std::string label() const;
};

/// Throws DomainError when alpha < 0, the fraction is outside [0, 1) or delta_t < 1.
void validate(const PerturbationSpec& spec);
PerturbationSpec::Kind perturbation_kind_from_string(const std::string& s);

/// Per-frame curvature term gamma over the history; frames past the last
/// forward difference reuse the last computable value.
Eigen::VectorXd history_curvature(const AgentTrack& track, int delta_t);

/// Adds N(0, (alpha * (gamma_t + 1))^2) to both coordinates of every valid history frame.
AgentTrack inject_noise(const AgentTrack& track, double alpha, int delta_t, std::uint64_t seed);

/// Zeroes round(fraction * t_h) distinct history frames and clears their mask bits.
AgentTrack drop_frames(const AgentTrack& track, double fraction, std::uint64_t seed);

/// Applies `spec` to the target and every neighbour, each with its own derived seed.
Scene perturb_scene(const Scene& scene, const PerturbationSpec& spec);

}  // namespace causaltraj
