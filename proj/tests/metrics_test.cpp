#include "doctest.h"

#include "causaltraj/errors.hpp"
#include "causaltraj/metrics.hpp"
#include "fixtures.hpp"
#include "metric_oracles.hpp"

#include <chrono>

using namespace causaltraj;

namespace {

using testing::ref_ade;

/// Constant-velocity extrapolation from the last two valid history frames.
MixturePrediction constant_velocity(const Scene& s, int modes) {
  const Index h = s.target.history_length;
  const Matrix& p = s.target.trajectory.points;
  Eigen::RowVector2d last = Eigen::RowVector2d::Zero(), v = Eigen::RowVector2d::Zero();
  int found = 0;
  for (Index t = h - 1; t >= 0 && found < 2; --t) {
    if (!s.target.trajectory.valid[static_cast<std::size_t>(t)]) continue;
    if (found == 0) last = p.row(t);
    else v = (last - p.row(t)) / static_cast<double>(h - 1 - t);
    ++found;
  }
  const Index tf = s.future_frames;
  Matrix mx(modes, tf), my(modes, tf);
  for (int k = 0; k < modes; ++k)
    for (Index t = 0; t < tf; ++t) {
      mx(k, t) = last.x() + v.x() * (t + 1) * (1.0 + 0.1 * k);
      my(k, t) = last.y() + v.y() * (t + 1);
    }
  MixturePrediction out;
  out.mu_x = ag::constant(mx);
  out.mu_y = ag::constant(my);
  out.sigma_x = out.sigma_y = ag::constant(Matrix::Ones(modes, tf));
  out.rho = ag::constant(Matrix::Zero(modes, tf));
  Matrix probs(1, modes);
  for (int k = 0; k < modes; ++k) probs(0, k) = (modes - k) / (modes * (modes + 1) / 2.0);
  out.probs = ag::constant(probs);
  return out;
}

PredictFn cv_predictor() {
  return [](const Scene& s, std::uint64_t) { return constant_velocity(s, 3); };
}

std::vector<Scene> synthetic(int count, std::uint64_t seed, double lo = 4, double hi = 12) {
  GeneratorConfig g;
  g.bev_size = 16;
  g.min_speed = lo;
  g.max_speed = hi;
  return generate_split(g, g.rho, count, seed, "m");
}

}  // namespace

TEST_CASE("hand-computed metric values") {
  Matrix gt = Matrix::Zero(2, 2), pred(2, 2);
  pred << 0, 0, 3, 4;
  CHECK(ade(pred, gt) == 2.5);
  CHECK(fde(pred, gt) == 5.0);
  CHECK(ade(gt, gt) == 0.0);
  Matrix shifted = gt;
  shifted.col(0).array() += 1.0;
  CHECK(ade(shifted, gt) == 1.0);
  CHECK(fde(shifted, gt) == 1.0);
  CHECK_THROWS_AS(ade(pred, Matrix::Zero(3, 2)), DomainError);
  CHECK_THROWS_AS(fde(Matrix(0, 2), Matrix(0, 2)), DomainError);

  Matrix one(1, 2), zero = Matrix::Zero(1, 2);
  one << 3, 4;
  CHECK(rmse_by_horizon({one}, {zero}, {1})[0] == 5.0);
  CHECK_THROWS_AS(rmse_by_horizon({pred}, {gt}, {3}), DomainError);

  std::map<AgentClass, double> per{{AgentClass::Vehicle, 2}, {AgentClass::Pedestrian, 1}, {AgentClass::Bicycle, 1}};
  CHECK(wsade(per, {0.2, 0.6, 0.2}) == doctest::Approx(1.2).epsilon(1e-15));
  CHECK(wsade(per, {1, 0, 0}) == 2.0);
  std::map<AgentClass, double> equal{{AgentClass::Vehicle, 1.7}, {AgentClass::Pedestrian, 1.7}, {AgentClass::Bicycle, 1.7}};
  CHECK(wsfde(equal, {0.2, 0.58, 0.22}) == doctest::Approx(1.7).epsilon(1e-15));
  CHECK_THROWS_AS(wsade({{AgentClass::Vehicle, 1}}, {0.2, 0.6, 0.2}), DomainError);
  CHECK(wsade({{AgentClass::Vehicle, 1}}, {1, 0, 0}) == 1.0);
  CHECK_THROWS_AS(wsade(per, {0.5, 0.6, -0.1}), DomainError);
  CHECK_THROWS_AS(wsade(per, {0.5, 0.6, 0.1}), DomainError);

  std::vector<Matrix> modes{shifted, gt, pred};
  Eigen::VectorXd probs(3);
  probs << 0.5, 0.2, 0.3;
  CHECK(min_ade_k(modes, probs, gt, 1) == 1.0);
  CHECK(min_ade_k(modes, probs, gt, 3) == 0.0);
  CHECK(min_fde_k(modes, probs, gt, 2) == 1.0);
  CHECK_THROWS_AS(min_ade_k(modes, probs, gt, 4), DomainError);
  CHECK_THROWS_AS(min_ade_k(modes, probs, gt, 0), DomainError);
}

TEST_CASE("metric kernels agree with brute force on random cases") {
  const auto start = std::chrono::steady_clock::now();
  const testing::MetricSweep r = testing::metric_sweep(100, 1);
  CHECK(r.worst < 1e-9);
  CHECK(r.monotone_k);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 5.0);
}

TEST_CASE("weighted sums are linear in the per-class values") {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0, 5);
  for (int i = 0; i < 50; ++i) {
    std::map<AgentClass, double> a, b, sum;
    for (int c = 0; c < 3; ++c) {
      a[static_cast<AgentClass>(c)] = u(rng);
      b[static_cast<AgentClass>(c)] = u(rng);
      sum[static_cast<AgentClass>(c)] = 2 * a[static_cast<AgentClass>(c)] + b[static_cast<AgentClass>(c)];
    }
    const std::vector<double> w{0.2, 0.58, 0.22};
    CHECK(wsade(sum, w) == doctest::Approx(2 * wsade(a, w) + wsade(b, w)).epsilon(1e-12));
  }
}

TEST_CASE("metric labels parse back") {
  for (const char* s : {"ade", "fde", "min_ade_1", "min_ade_10", "rmse", "wsade", "wsfde"})
    CHECK(metric_from_string(s).label() == s);
  CHECK(metric_from_string("min_ade_5").k == 5);
  for (const char* bad : {"min_ade_0", "min_ade_x", "min_ade_3b", "mae", ""})
    CHECK_THROWS_AS(metric_from_string(bad), UsageError);
  CHECK(default_metrics().size() == 5);
}

TEST_CASE("evaluation harness is reproducible and order free") {
  auto scenes = synthetic(20, 3);
  for (std::size_t i = 0; i < scenes.size(); ++i) scenes[i].target.agent_class = static_cast<AgentClass>(i % 3);
  const auto metrics = default_metrics();
  std::vector<MetricSpec> all = metrics;
  all.push_back(metric_from_string("wsade"));
  all.push_back(metric_from_string("wsfde"));
  const PredictFn cv = cv_predictor();
  PerturbationSpec none;
  const EvalReport a = evaluate(cv, 8, 10, scenes, all, none, 4);
  CHECK(a.scenes == 20);
  CHECK(a.horizons_s == std::vector<double>{1, 2, 3, 4, 5});
  for (const auto& [name, v] : a.metrics) CHECK((std::isfinite(v) && v >= 0));
  CHECK(evaluate(cv, 8, 10, scenes, all, none, 4).to_json() == a.to_json());

  std::vector<Scene> reversed(scenes.rbegin(), scenes.rend());
  CHECK(evaluate(cv, 8, 10, reversed, all, none, 4).to_json() == a.to_json());

  PerturbationSpec zero;
  zero.kind = PerturbationSpec::Kind::Noise;
  zero.alpha = 0;
  zero.seed = 9;
  CHECK(evaluate(cv, 8, 10, scenes, all, zero, 4).metrics == a.metrics);

  // The most probable mode is the mode-0 extrapolation, so rmse at 5 s equals
  // the per-scene displacement pooled over scenes.
  std::vector<Matrix> preds, gts;
  for (const auto& s : scenes) {
    preds.push_back(constant_velocity(s, 3).means(0));
    gts.push_back(s.target_future());
  }
  CHECK(a.rmse_horizon.back() == doctest::Approx(rmse_by_horizon(preds, gts, {10})[0]).epsilon(1e-12));
  double per[3] = {0, 0, 0}, count[3] = {0, 0, 0};
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    per[i % 3] += ref_ade(preds[i], gts[i]);
    count[i % 3] += 1;
  }
  const double ws = 0.2 * per[0] / count[0] + 0.58 * per[1] / count[1] + 0.22 * per[2] / count[2];
  CHECK(a.metrics.at("wsade") == doctest::Approx(ws).epsilon(1e-12));
  CHECK_THROWS_AS(evaluate(cv, 8, 12, scenes, all, none, 4), ConfigError);
}

TEST_CASE("history noise and frame drops degrade a constant-velocity predictor") {
  const auto scenes = synthetic(60, 5);
  const PredictFn cv = cv_predictor();
  const std::vector<MetricSpec> ms{metric_from_string("ade"), metric_from_string("fde")};
  auto run = [&](PerturbationSpec::Kind kind, double alpha, double drop) {
    PerturbationSpec p;
    p.kind = kind;
    p.alpha = alpha;
    p.drop_fraction = drop;
    p.seed = 2;
    return evaluate(cv, 8, 10, scenes, ms, p, 1).metrics.at("ade");
  };
  const double clean = run(PerturbationSpec::Kind::None, 0, 0);
  const double a8 = run(PerturbationSpec::Kind::Noise, 8, 0), a16 = run(PerturbationSpec::Kind::Noise, 16, 0);
  CHECK(a8 >= clean);
  CHECK(a16 >= a8);
  const double d20 = run(PerturbationSpec::Kind::FrameDrop, 0, 0.2), d40 = run(PerturbationSpec::Kind::FrameDrop, 0, 0.4);
  CHECK(d20 >= clean);
  CHECK(d40 >= d20);
}

TEST_CASE("Kolmogorov-Smirnov test") {
  std::vector<double> a{0.1, 0.4, 0.4, 0.9, 1.3, 2.2};
  const KsResult self = ks_test(a, a);
  CHECK(self.statistic == 0.0);
  CHECK(self.p_value == 1.0);

  // Statistic against a brute-force ECDF scan over all sample points.
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x, y;
    for (int i = 0; i < 15 + trial; ++i) x.push_back(std::round(standard_normal(1, 1, rng)(0, 0) * 4) / 4);
    for (int i = 0; i < 20; ++i) y.push_back(std::round((standard_normal(1, 1, rng)(0, 0) + 0.3) * 4) / 4);
    double d = 0;
    for (double v : x) {
      double fx = 0, fy = 0;
      for (double q : x) fx += q <= v;
      for (double q : y) fy += q <= v;
      d = std::max(d, std::abs(fx / x.size() - fy / y.size()));
    }
    for (double v : y) {
      double fx = 0, fy = 0;
      for (double q : x) fx += q <= v;
      for (double q : y) fy += q <= v;
      d = std::max(d, std::abs(fx / x.size() - fy / y.size()));
    }
    CHECK(ks_test(x, y).statistic == doctest::Approx(d).epsilon(1e-15));
  }

  const auto slow = synthetic(40, 7, 4, 6), fast = synthetic(40, 8, 10, 12);
  const KsResult shifted = ks_test(target_speeds(slow), target_speeds(fast));
  CHECK(shifted.statistic == 1.0);
  CHECK(shifted.p_value < 0.05);
  CHECK(ks_test(target_speeds(slow), target_speeds(synthetic(40, 9, 4, 6))).p_value > 0.05);
  CHECK_THROWS_AS(ks_test({}, a), DomainError);
}

TEST_CASE("cross-domain evaluation and ablation runs") {
  Config cfg = testing::tiny_config(Variant::D);
  cfg.train.max_steps = 3;
  cfg.train.batch_size = 2;
  GeneratorConfig g = cfg.generator;
  g.min_speed = 4;
  g.max_speed = 6;
  const auto slow = generate_split(g, g.rho, 6, 1, "slow");
  g.min_speed = 10;
  g.max_speed = 12;
  const auto fast = generate_split(g, g.rho, 6, 2, "fast");
  int built = 0;
  ModelFactory factory = [&](const std::vector<Scene>& train) {
    ++built;
    return train_model(cfg, train, 3);
  };
  const MetricSpec m = metric_from_string("ade");
  const CrossDomainResult r = cross_domain_eval(factory, {{"slow", slow}, {"fast", fast}}, m);
  CHECK(built == 2);
  CHECK(r.values.rows() == 2);
  CHECK(r.values.allFinite());
  CHECK(r.ks_p(0, 0) == 1.0);
  CHECK(r.ks_p(0, 1) < 0.05);
  CHECK(r.ks_p(0, 1) == r.ks_p(1, 0));

  const CrossDomainResult same = cross_domain_eval(factory, {{"a", slow}, {"b", slow}}, m);
  CHECK(same.values(0, 0) == same.values(0, 1));
  CHECK(same.values(1, 0) == same.values(1, 1));
  CHECK(same.values(0, 0) == same.values(1, 0));

  CHECK_THROWS_AS(cross_domain_eval(factory, {{"slow", slow}}, m), ConfigError);
  CHECK_THROWS_AS(cross_domain_eval(factory, {{"slow", slow}, {"one", {fast[0]}}}, m), ConfigError);

  Config e = testing::tiny_config();
  e.train.diffusion_steps = 3;
  e.train.max_steps = 2;
  const EvalReport rep = run_ablation(Variant::B, slow, fast, e, default_metrics());
  CHECK(rep.variant == "B");
  CHECK(rep.scenes == 6);
  CHECK(rep.fingerprint.size() == 16);
}
