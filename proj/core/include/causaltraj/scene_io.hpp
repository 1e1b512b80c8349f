#pragma once

// JSON-lines scene exchange format, one scene per line:
//
//   {"id": str, "dt": float, "t_h": int, "t_f": int,
//    "target": track, "neighbors": [track...], "map": [polyline...],
//    "bev": {"agent": [[...]], "map": [[...]], "raster": [[...]], "res": float},
//    "maneuver": int}
//
//   track    = {"class": "vehicle"|"pedestrian"|"bicycle",
//               "history": [[x, y] * (t_h+1)], "future": [[x, y] * t_f],
//               "valid": [0|1 * (t_h+1+t_f)], "states": [[...] * frames]}
//   polyline = {"id": int, "points": [[x, y, road_type, lane_id] * n]}
//
// "valid" and "states" are optional on input (default all valid / none). A
// neighbour "future" may be omitted; its frames are then zero and invalid.
// "maneuver" is optional for inference-only scenes.

#include "causaltraj/scene.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace causaltraj {

/// Parses one JSON line. `line_no` is used in ParseError messages.
Scene parse_scene(const std::string& line, std::size_t line_no = 0);
std::string serialize_scene(const Scene& scene);

/// Reads `<path>/<split>.jsonl` when `path` is a directory, else `path`
/// itself. Validates every scene and sorts by id.
std::vector<Scene> load_dataset(const std::filesystem::path& path, const std::string& split = "train");
std::vector<Scene> load_scenes_file(const std::filesystem::path& file);
void save_scenes_file(const std::filesystem::path& file, const std::vector<Scene>& scenes);

/// Split names accepted by load_dataset.
bool is_known_split(const std::string& split);

}  // namespace causaltraj
