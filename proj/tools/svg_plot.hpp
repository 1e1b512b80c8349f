#pragma once

// Static trajectory overlays: map polylines, observed history, ground-truth
// future and the predicted modes (opacity by probability), one SVG per scene.

#include "causaltraj/decoder.hpp"
#include "causaltraj/scene.hpp"

#include <string>
#include <vector>

namespace causaltraj::tools {

struct PlotLayer {
  std::string label;
  std::string color;
  MixturePrediction prediction;
};

std::string render_scene_svg(const Scene& scene, const std::vector<PlotLayer>& layers, int width = 640,
                             int height = 360);

}  // namespace causaltraj::tools
