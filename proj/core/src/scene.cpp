#include "causaltraj/scene.hpp"

#include "causaltraj/errors.hpp"

#include <algorithm>
#include <cmath>

namespace causaltraj {

const char* to_string(AgentClass c) {
  switch (c) {
    case AgentClass::Vehicle: return "vehicle";
    case AgentClass::Pedestrian: return "pedestrian";
    case AgentClass::Bicycle: return "bicycle";
  }
  return "vehicle";
}

AgentClass agent_class_from_string(const std::string& s) {
  if (s == "vehicle") return AgentClass::Vehicle;
  if (s == "pedestrian") return AgentClass::Pedestrian;
  if (s == "bicycle") return AgentClass::Bicycle;
  throw ValidationError("class", "unknown agent class '" + s + "'");
}

bool Trajectory::all_valid() const {
  return std::all_of(valid.begin(), valid.end(), [](bool v) { return v; });
}

Matrix AgentTrack::history_states() const {
  Matrix out(history_length, state_width());
  out.leftCols(2) = trajectory.points.topRows(history_length);
  if (extra_states.cols() > 0) out.rightCols(extra_states.cols()) = extra_states.topRows(history_length);
  for (Index t = 0; t < history_length; ++t)
    if (!trajectory.valid[static_cast<std::size_t>(t)]) out.row(t).setZero();
  return out;
}

namespace {

void validate_track(const AgentTrack& track, const std::string& field, int t_h, int t_f, double dt) {
  const auto& tr = track.trajectory;
  if (track.history_length != t_h + 1)
    throw ValidationError(field + ".history", "expected " + std::to_string(t_h + 1) + " frames, got " +
                                                  std::to_string(track.history_length));
  if (tr.frames() != t_h + t_f + 1)
    throw ValidationError(field + ".future", "expected " + std::to_string(t_f) + " frames, got " +
                                                 std::to_string(tr.frames() - track.history_length));
  if (tr.points.cols() != 2) throw ValidationError(field + ".points", "positions must have 2 columns");
  if (static_cast<Index>(tr.valid.size()) != tr.frames())
    throw ValidationError(field + ".valid", "mask length does not match frame count");
  if (!(tr.dt > 0) || std::abs(tr.dt - dt) > 1e-12) throw ValidationError(field + ".dt", "must equal scene dt > 0");
  if (!tr.points.allFinite()) throw ValidationError(field + ".points", "non-finite coordinate");
  for (Index t = 0; t < tr.frames(); ++t)
    if (!tr.valid[static_cast<std::size_t>(t)] && !tr.points.row(t).isZero(0.0))
      throw ValidationError(field + ".points", "masked frame " + std::to_string(t) + " must hold the zero sentinel");
  if (track.extra_states.size() > 0 && track.extra_states.rows() != tr.frames())
    throw ValidationError(field + ".states", "extra state rows must match frame count");
}

void validate_layer(const Matrix& m, const Matrix& ref, const std::string& field) {
  if (m.rows() != ref.rows() || m.cols() != ref.cols())
    throw ValidationError(field, "BEV layers must share H x W");
  if (m.size() > 0 && (m.minCoeff() < 0.0 || m.maxCoeff() > 1.0))
    throw ValidationError(field, "intensities must lie in [0, 1]");
}

}  // namespace

void validate(const Scene& scene, int maneuver_count) {
  if (!(scene.dt > 0)) throw ValidationError("dt", "must be positive");
  if (scene.history_frames < 0) throw ValidationError("t_h", "must be non-negative");
  if (scene.future_frames < 1) throw ValidationError("t_f", "must be at least 1");
  validate_track(scene.target, "target", scene.history_frames, scene.future_frames, scene.dt);
  for (std::size_t i = 0; i < scene.neighbors.size(); ++i)
    validate_track(scene.neighbors[i], "neighbors[" + std::to_string(i) + "]", scene.history_frames,
                   scene.future_frames, scene.dt);
  Index n = -1;
  for (std::size_t i = 0; i < scene.map.size(); ++i) {
    const auto& p = scene.map[i].points;
    const std::string f = "map[" + std::to_string(i) + "].points";
    if (p.rows() < 2) throw ValidationError(f, "polyline needs at least 2 waypoints");
    if (p.cols() < 2) throw ValidationError(f, "waypoints need at least x and y");
    if (n >= 0 && p.rows() != n) throw ValidationError(f, "all polylines must share the same waypoint count");
    if (i > 0 && p.cols() != scene.map[0].points.cols())
      throw ValidationError(f, "all polylines must share the same attribute count");
    if (!p.allFinite()) throw ValidationError(f, "non-finite waypoint");
    n = p.rows();
  }
  const auto& b = scene.bev;
  validate_layer(b.agent, b.agent, "bev.agent");
  validate_layer(b.map, b.agent, "bev.map");
  validate_layer(b.raster, b.agent, "bev.raster");
  if (!(b.resolution > 0)) throw ValidationError("bev.res", "must be positive");
  if (scene.maneuver && (*scene.maneuver < 0 || *scene.maneuver >= maneuver_count))
    throw ValidationError("maneuver", "must lie in [0, " + std::to_string(maneuver_count) + ")");
}

void pad_polylines(std::vector<MapPolyline>& map) {
  Index n = 0;
  for (const auto& p : map) n = std::max(n, p.points.rows());
  for (auto& p : map) {
    const Index have = p.points.rows();
    if (have == n || have == 0) continue;
    Matrix padded(n, p.points.cols());
    padded.topRows(have) = p.points;
    for (Index r = have; r < n; ++r) padded.row(r) = p.points.row(have - 1);
    p.points = std::move(padded);
  }
}

AgentTrack zero_history(const AgentTrack& track) {
  AgentTrack out = track;
  out.trajectory.points.topRows(track.history_length).setZero();
  for (Index t = 0; t < track.history_length; ++t) out.trajectory.valid[static_cast<std::size_t>(t)] = false;
  if (out.extra_states.size() > 0) out.extra_states.topRows(track.history_length).setZero();
  return out;
}

}  // namespace causaltraj
