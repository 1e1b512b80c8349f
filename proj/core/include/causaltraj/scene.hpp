#pragma once

// Scene data model: one prediction instance with target, neighbours, vector
// map and BEV raster. Coordinates are metres in a common scene frame.

#include "causaltraj/autograd.hpp"

#include <optional>
#include <string>
#include <vector>

namespace causaltraj {

enum class AgentClass { Vehicle = 0, Pedestrian = 1, Bicycle = 2 };

const char* to_string(AgentClass c);
AgentClass agent_class_from_string(const std::string& s);

/// Positions (frames x 2) sampled every `dt` seconds, with a per-frame
/// validity flag. Invalid frames hold the zero sentinel.
struct Trajectory {
  Matrix points;
  std::vector<bool> valid;
  double dt = 0.1;

  Index frames() const { return points.rows(); }
  bool all_valid() const;
};

struct AgentTrack {
  /// History frames followed by future frames; history_length = t_h + 1.
  Trajectory trajectory;
  Index history_length = 0;
  /// Optional per-frame attributes beyond position (frames x (W_a - 2)).
  Matrix extra_states;
  AgentClass agent_class = AgentClass::Vehicle;

  Index state_width() const { return 2 + extra_states.cols(); }
  Matrix history() const { return trajectory.points.topRows(history_length); }
  Matrix future() const { return trajectory.points.bottomRows(trajectory.frames() - history_length); }
  /// history_length x W_a per-frame state (positions then extras), invalid frames zero.
  Matrix history_states() const;
};

/// n waypoints x W_m attributes: (x, y, road-type code, lane id).
struct MapPolyline {
  Matrix points;
  int id = 0;
};

enum class RoadType { Lane = 1, Crosswalk = 2, RoadEdge = 3 };

struct BevRaster {
  Matrix agent;
  Matrix map;
  Matrix raster;
  double resolution = 0.5;
};

struct Scene {
  std::string id;
  double dt = 0.5;
  int history_frames = 0;  // t_h
  int future_frames = 0;   // t_f
  AgentTrack target;
  std::vector<AgentTrack> neighbors;
  std::vector<MapPolyline> map;
  BevRaster bev;
  std::optional<int> maneuver;

  Matrix target_history() const { return target.history(); }
  Matrix target_future() const { return target.future(); }
};

/// Throws ValidationError naming the first offending field.
void validate(const Scene& scene, int maneuver_count = 3);

/// Pads every polyline to the longest one by repeating its last waypoint.
void pad_polylines(std::vector<MapPolyline>& map);

/// Copy of `track` with every history frame set to the zero sentinel and
/// marked invalid; the future is unchanged.
AgentTrack zero_history(const AgentTrack& track);

}  // namespace causaltraj
