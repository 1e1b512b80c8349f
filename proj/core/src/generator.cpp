#include "causaltraj/generator.hpp"

#include "causaltraj/errors.hpp"
#include "causaltraj/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>

namespace causaltraj {

namespace {

constexpr double kLaneWidth = 3.5;
constexpr double kHistoryJitter = 0.03;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

AgentTrack make_track(const GeneratorConfig& cfg, AgentClass cls, const std::function<Eigen::Vector2d(double)>& pos,
                      double jitter, Rng& rng) {
  AgentTrack t;
  t.agent_class = cls;
  t.history_length = cfg.history_frames + 1;
  t.trajectory.dt = cfg.dt;
  const Index frames = cfg.history_frames + cfg.future_frames + 1;
  t.trajectory.points.resize(frames, 2);
  t.trajectory.valid.assign(static_cast<std::size_t>(frames), true);
  std::normal_distribution<double> noise(0.0, jitter);
  for (Index f = 0; f < frames; ++f) {
    const double time = static_cast<double>(f - cfg.history_frames) * cfg.dt;
    Eigen::Vector2d p = pos(time);
    if (f < cfg.history_frames && jitter > 0) p += Eigen::Vector2d(noise(rng), noise(rng));
    t.trajectory.points.row(f) = p.transpose();
  }
  return t;
}

/// Longitudinal position of the target at time `time` (0 = current frame).
double target_x(int maneuver, double v0, double accel, double stop_time, double time) {
  if (time <= 0) return v0 * time;
  switch (maneuver) {
    case kAccelerate: return v0 * time + 0.5 * accel * time * time;
    case kStop: {
      const double a = v0 / stop_time;
      const double tt = std::min(time, stop_time);
      return v0 * tt - 0.5 * a * tt * tt;
    }
    default: return v0 * time;
  }
}

MapPolyline straight_polyline(int id, int n, Eigen::Vector2d a, Eigen::Vector2d b, RoadType type, int lane) {
  MapPolyline p;
  p.id = id;
  p.points.resize(n, 4);
  for (int i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) / (n - 1);
    const Eigen::Vector2d q = a + s * (b - a);
    p.points.row(i) << q.x(), q.y(), static_cast<double>(type), static_cast<double>(lane);
  }
  return p;
}

Scene make_scene(const GeneratorConfig& cfg, bool agree, Rng& rng, const std::string& id) {
  Scene s;
  s.id = id;
  s.dt = cfg.dt;
  s.history_frames = cfg.history_frames;
  s.future_frames = cfg.future_frames;

  const double v0 = uniform(rng, cfg.min_speed, cfg.max_speed);
  const bool pedestrian = uniform(rng, 0.0, 1.0) < cfg.pedestrian_probability;
  int maneuver = pedestrian ? kStop : (v0 < 8.0 ? kAccelerate : kKeep);
  if (uniform(rng, 0.0, 1.0) < cfg.label_noise) maneuver = uniform_int(rng, 0, 2);
  const double accel = uniform(rng, 1.0, 2.0);
  const double stop_time = uniform(rng, 2.0, 4.0);
  s.maneuver = maneuver;

  s.target = make_track(
      cfg, AgentClass::Vehicle,
      [&](double time) { return Eigen::Vector2d(target_x(maneuver, v0, accel, stop_time, time), 0.0); },
      kHistoryJitter, rng);

  if (pedestrian) {
    const double px = uniform(rng, 12.0, 24.0);
    const double py = uniform(rng, -2.0, 2.0);
    const double vy = uniform(rng, 0.3, 0.8) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
    s.neighbors.push_back(make_track(
        cfg, AgentClass::Pedestrian, [&](double time) { return Eigen::Vector2d(px, py + vy * time); },
        kHistoryJitter, rng));
  }
  const int distractors = uniform_int(rng, 0, 2);
  for (int d = 0; d < distractors; ++d) {
    const double lane_y = uniform(rng, 0.0, 1.0) < 0.5 ? kLaneWidth : -kLaneWidth;
    const double x0 = uniform(rng, -20.0, 30.0);
    const double v = uniform(rng, 5.0, 12.0);
    s.neighbors.push_back(make_track(
        cfg, AgentClass::Vehicle, [&](double time) { return Eigen::Vector2d(x0 + v * time, lane_y); }, kHistoryJitter,
        rng));
  }
  if (uniform(rng, 0.0, 1.0) < 0.3) {
    const double side = uniform(rng, 0.0, 1.0) < 0.5 ? 1.0 : -1.0;
    const double wy = side * uniform(rng, 6.5, 8.0);
    const double wx = uniform(rng, -10.0, 30.0);
    const double wv = uniform(rng, 0.8, 1.5);
    s.neighbors.push_back(make_track(
        cfg, AgentClass::Pedestrian, [&](double time) { return Eigen::Vector2d(wx + wv * time, wy); },
        kHistoryJitter, rng));
  }

  const int n = cfg.polyline_points;
  s.map.push_back(straight_polyline(0, n, {-30.0, 0.0}, {60.0, 0.0}, RoadType::Lane, 0));
  s.map.push_back(straight_polyline(1, n, {-30.0, kLaneWidth}, {60.0, kLaneWidth}, RoadType::Lane, 1));
  s.map.push_back(straight_polyline(2, n, {-30.0, -kLaneWidth}, {60.0, -kLaneWidth}, RoadType::Lane, 2));
  const bool crosswalk = (maneuver == kAccelerate) == agree;
  const double cx = uniform(rng, 20.0, 40.0);
  const double edge = 1.5 * kLaneWidth;
  if (crosswalk)
    s.map.push_back(straight_polyline(3, n, {cx, -edge}, {cx, edge}, RoadType::Crosswalk, 3));
  else
    s.map.push_back(straight_polyline(3, n, {cx, edge}, {cx + 20.0, edge}, RoadType::RoadEdge, 3));

  s.bev = render_bev(s, cfg.bev_size, cfg.bev_resolution);
  return s;
}

}  // namespace

void validate(const GeneratorConfig& c) {
  if (!(c.rho >= 0.0 && c.rho <= 1.0)) throw ConfigError("generator.rho must lie in [0, 1]");
  if (c.train_scenes < 0 || c.test_scenes < 0) throw ConfigError("generator scene counts must be non-negative");
  if (c.history_frames < 1 || c.future_frames < 1) throw ConfigError("generator t_h and t_f must be at least 1");
  if (!(c.dt > 0)) throw ConfigError("generator.dt must be positive");
  if (!(c.label_noise >= 0.0 && c.label_noise <= 1.0)) throw ConfigError("generator.label_noise must lie in [0, 1]");
  if (c.polyline_points < 2) throw ConfigError("generator.polyline_points must be at least 2");
  if (c.bev_size < 4 || !(c.bev_resolution > 0)) throw ConfigError("generator BEV size/resolution invalid");
  if (!(c.min_speed > 0 && c.max_speed > c.min_speed)) throw ConfigError("generator speed range invalid");
}

std::vector<Scene> generate_split(const GeneratorConfig& cfg, double rho, int count, std::uint64_t seed,
                                  const std::string& prefix) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("generator.rho must lie in [0, 1]");
  Rng split_rng(seed);
  const int agreeing = static_cast<int>(std::lround(rho * count));
  std::vector<char> agree(static_cast<std::size_t>(count), 0);
  std::fill(agree.begin(), agree.begin() + agreeing, 1);
  std::shuffle(agree.begin(), agree.end(), split_rng);

  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i) + 1));
    char id[64];
    std::snprintf(id, sizeof id, "%s-%06d", prefix.c_str(), i);
    out.push_back(make_scene(cfg, agree[static_cast<std::size_t>(i)] != 0, rng, id));
  }
  return out;
}

GeneratedDataset generate_confounded_dataset(const GeneratorConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  GeneratedDataset d;
  d.train = generate_split(cfg, cfg.rho, cfg.train_scenes, derive_seed(seed, 1), "train");
  d.test_iid = generate_split(cfg, cfg.rho, cfg.test_scenes, derive_seed(seed, 2), "test_iid");
  d.test_shifted = generate_split(cfg, 1.0 - cfg.rho, cfg.test_scenes, derive_seed(seed, 3), "test_shifted");
  return d;
}

bool has_crosswalk(const Scene& scene) {
  return std::any_of(scene.map.begin(), scene.map.end(), [](const MapPolyline& p) {
    return p.points.cols() > 2 && p.points.rows() > 0 &&
           static_cast<int>(p.points(0, 2)) == static_cast<int>(RoadType::Crosswalk);
  });
}

double cooccurrence_rate(const std::vector<Scene>& scenes) {
  if (scenes.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : scenes)
    if (has_crosswalk(s) == (s.maneuver && *s.maneuver == kAccelerate)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(scenes.size());
}

BevRaster render_bev(const Scene& scene, int size, double res) {
  BevRaster b;
  b.resolution = res;
  b.agent = Matrix::Zero(size, size);
  b.map = Matrix::Zero(size, size);
  b.raster = Matrix::Zero(size, size);
  const double half = 0.5 * size * res;
  auto cell = [&](double x, double y, Index& r, Index& c) {
    r = static_cast<Index>(std::floor((x + half) / res));
    c = static_cast<Index>(std::floor((y + half) / res));
    return r >= 0 && r < size && c >= 0 && c < size;
  };

  auto paint_track = [&](const AgentTrack& t) {
    const Index h = t.history_length;
    for (Index k = 0; k < h; ++k) {
      if (!t.trajectory.valid[static_cast<std::size_t>(k)]) continue;
      Index r, c;
      if (!cell(t.trajectory.points(k, 0), t.trajectory.points(k, 1), r, c)) continue;
      const double recency = std::ceil(8.0 * static_cast<double>(k + 1) / static_cast<double>(h)) / 8.0;
      b.agent(r, c) = std::max(b.agent(r, c), recency);
    }
  };
  paint_track(scene.target);
  for (const auto& n : scene.neighbors) paint_track(n);

  const double step = 0.5 * res;
  for (const auto& p : scene.map) {
    for (Index i = 0; i + 1 < p.points.rows(); ++i) {
      const Eigen::Vector2d a = p.points.row(i).head<2>().transpose();
      const Eigen::Vector2d d = p.points.row(i + 1).head<2>().transpose() - a;
      const int samples = std::max(1, static_cast<int>(std::ceil(d.norm() / step)));
      for (int s = 0; s <= samples; ++s) {
        const Eigen::Vector2d q = a + d * (static_cast<double>(s) / samples);
        Index r, c;
        if (cell(q.x(), q.y(), r, c)) b.map(r, c) = 1.0;
      }
    }
  }

  // Drivable area: cells within half a lane width of a lane centreline.
  for (Index r = 0; r < size; ++r)
    for (Index c = 0; c < size; ++c) {
      const Eigen::Vector2d q(-half + (static_cast<double>(r) + 0.5) * res, -half + (static_cast<double>(c) + 0.5) * res);
      for (const auto& p : scene.map) {
        if (p.points.cols() < 3 || static_cast<int>(p.points(0, 2)) != static_cast<int>(RoadType::Lane)) continue;
        bool inside = false;
        for (Index i = 0; i + 1 < p.points.rows() && !inside; ++i) {
          const Eigen::Vector2d a = p.points.row(i).head<2>().transpose();
          const Eigen::Vector2d d = p.points.row(i + 1).head<2>().transpose() - a;
          const double len2 = d.squaredNorm();
          const double u = len2 > 0 ? std::clamp((q - a).dot(d) / len2, 0.0, 1.0) : 0.0;
          inside = (q - (a + u * d)).norm() < 0.5 * kLaneWidth;
        }
        if (inside) {
          b.raster(r, c) = 1.0;
          break;
        }
      }
    }
  return b;
}

}  // namespace causaltraj
