#pragma once

// Small configurations and scenes shared by the model-level tests.

#include "causaltraj/config.hpp"
#include "causaltraj/generator.hpp"

namespace causaltraj::testing {

/// D = 8, n = 2, T_rec = 2, t_f = 4: small enough for finite differences.
inline Config tiny_config(Variant v = Variant::E) {
  Config c;
  c.model.variant = v;
  c.model.encoders.dim = 8;
  c.model.encoders.kernel_sizes = {3};
  c.model.encoders.kernel_channels = 1;
  c.model.encoders.pyramid_grid = 2;
  c.model.diffusion.steps = 6;
  c.model.diffusion.samples = 2;
  c.model.diffusion.blocks = 1;
  c.model.diffusion.hidden = 8;
  c.model.fusion.t_rec = 2;
  c.model.fusion.channels = 2;
  c.model.decoder.future_frames = 4;
  c.generator.future_frames = 4;
  c.generator.bev_size = 32;
  c.generator.train_scenes = 12;
  c.generator.test_scenes = 4;
  return c;
}

inline std::vector<Scene> tiny_scenes(const Config& c, int count, std::uint64_t seed = 7) {
  return generate_split(c.generator, c.generator.rho, count, seed, "tiny");
}

}  // namespace causaltraj::testing
