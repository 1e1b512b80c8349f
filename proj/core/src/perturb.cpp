#include "causaltraj/perturb.hpp"

#include "causaltraj/errors.hpp"
#include "causaltraj/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace causaltraj {

std::string PerturbationSpec::label() const {
  std::ostringstream os;
  switch (kind) {
    case Kind::None: return "clean";
    case Kind::Noise: os << "noise-a" << alpha; break;
    case Kind::FrameDrop: os << "drop-" << drop_fraction; break;
  }
  return os.str();
}

void validate(const PerturbationSpec& spec) {
  if (spec.alpha < 0) throw DomainError("perturbation alpha must be >= 0");
  if (!(spec.drop_fraction >= 0.0 && spec.drop_fraction < 1.0))
    throw DomainError("perturbation drop fraction must lie in [0, 1)");
  if (spec.delta_t < 1) throw DomainError("perturbation delta_t must be >= 1");
}

PerturbationSpec::Kind perturbation_kind_from_string(const std::string& s) {
  if (s == "none" || s == "clean") return PerturbationSpec::Kind::None;
  if (s == "noise") return PerturbationSpec::Kind::Noise;
  if (s == "drop" || s == "frame_drop") return PerturbationSpec::Kind::FrameDrop;
  throw UsageError("unknown perturbation kind '" + s + "'");
}

Eigen::VectorXd history_curvature(const AgentTrack& track, int delta_t) {
  const Index h = track.history_length;
  if (delta_t < 1) throw DomainError("delta_t must be >= 1");
  if (h < delta_t + 2) throw DomainError("track history too short for delta_t");
  const Matrix& p = track.trajectory.points;
  const Matrix vel = p.middleRows(1, h - 1) - p.topRows(h - 1);
  Eigen::VectorXd gamma(h);
  const Index computable = h - 1 - delta_t;
  for (Index t = 0; t < h; ++t) {
    const Index s = std::min(t, computable - 1);
    gamma(t) = (vel.row(s + delta_t) - vel.row(s)).squaredNorm();
  }
  return gamma;
}

AgentTrack inject_noise(const AgentTrack& track, double alpha, int delta_t, std::uint64_t seed) {
  if (alpha < 0) throw DomainError("noise alpha must be >= 0");
  AgentTrack out = track;
  if (alpha == 0) return out;
  const Eigen::VectorXd gamma = history_curvature(track, delta_t);
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  for (Index t = 0; t < track.history_length; ++t) {
    const double sigma = alpha * (gamma(t) + 1.0);
    const double ex = n(rng), ey = n(rng);
    if (!track.trajectory.valid[static_cast<std::size_t>(t)]) continue;
    out.trajectory.points(t, 0) += sigma * ex;
    out.trajectory.points(t, 1) += sigma * ey;
  }
  return out;
}

AgentTrack drop_frames(const AgentTrack& track, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw DomainError("drop fraction must lie in [0, 1)");
  AgentTrack out = track;
  const Index h = track.history_length;
  const auto count = static_cast<Index>(std::lround(fraction * static_cast<double>(h - 1)));
  if (count == 0) return out;
  std::vector<Index> frames(static_cast<std::size_t>(h));
  std::iota(frames.begin(), frames.end(), Index{0});
  Rng rng(seed);
  std::shuffle(frames.begin(), frames.end(), rng);
  for (Index k = 0; k < count; ++k) {
    const Index t = frames[static_cast<std::size_t>(k)];
    out.trajectory.points.row(t).setZero();
    out.trajectory.valid[static_cast<std::size_t>(t)] = false;
    if (out.extra_states.size() > 0) out.extra_states.row(t).setZero();
  }
  return out;
}

Scene perturb_scene(const Scene& scene, const PerturbationSpec& spec) {
  validate(spec);
  if (spec.kind == PerturbationSpec::Kind::None) return scene;
  Scene out = scene;
  auto apply = [&](const AgentTrack& t, std::uint64_t stream) {
    const std::uint64_t s = derive_seed(spec.seed, stream);
    return spec.kind == PerturbationSpec::Kind::Noise ? inject_noise(t, spec.alpha, spec.delta_t, s)
                                                      : drop_frames(t, spec.drop_fraction, s);
  };
  const std::uint64_t base = fnv1a(scene.id.data(), scene.id.size());
  out.target = apply(scene.target, base);
  for (std::size_t i = 0; i < scene.neighbors.size(); ++i) out.neighbors[i] = apply(scene.neighbors[i], base + i + 1);
  return out;
}

}  // namespace causaltraj
