#include "doctest.h"

#include "causaltraj/errors.hpp"
#include "causaltraj/metrics.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

#include <filesystem>
#include <fstream>

using namespace causaltraj;

namespace {

MixturePrediction prediction_from(const std::vector<Matrix>& modes, const Matrix& probs) {
  const Index k = static_cast<Index>(modes.size()), t = modes[0].rows();
  Matrix mx(k, t), my(k, t);
  for (Index i = 0; i < k; ++i) {
    mx.row(i) = modes[static_cast<std::size_t>(i)].col(0).transpose();
    my.row(i) = modes[static_cast<std::size_t>(i)].col(1).transpose();
  }
  MixturePrediction p;
  p.mu_x = ag::constant(mx);
  p.mu_y = ag::constant(my);
  p.sigma_x = ag::constant(Matrix::Constant(k, t, 0.8));
  p.sigma_y = ag::constant(Matrix::Constant(k, t, 1.3));
  p.rho = ag::constant(Matrix::Constant(k, t, 0.2));
  p.probs = ag::constant(probs);
  return p;
}

double brute_ade(const Matrix& a, const Matrix& b) {
  double s = 0;
  for (Index t = 0; t < a.rows(); ++t) s += std::hypot(a(t, 0) - b(t, 0), a(t, 1) - b(t, 1));
  return s / static_cast<double>(a.rows());
}

void make_trainable(nn::ParamStore& store, bool on) {
  for (const char* g : {"spatial", "temporal", "bev", "attention", "fusion", "dual", "decoder", "loss"})
    store.set_group_trainable(g, on);
}

}  // namespace

TEST_CASE("intention loss") {
  Matrix onehot(1, 3);
  onehot << 0, 1, 0;
  CHECK(intention_loss(ag::constant(onehot), 1).item() == 0.0);
  Matrix uniform = Matrix::Constant(1, 3, 1.0 / 3.0);
  CHECK(intention_loss(ag::constant(uniform), 2).item() == doctest::Approx(1.0986122886681098).epsilon(1e-12));
  bool clamped = false;
  CHECK(intention_loss(ag::constant(onehot), 0, &clamped).item() == doctest::Approx(-std::log(1e-12)));
  CHECK(clamped);
  intention_loss(ag::constant(uniform), 0, &clamped);
  CHECK_FALSE(clamped);
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    Matrix logits = standard_normal(1, 3, rng) * 4.0;
    Tensor p = ag::softmax_rows(ag::constant(logits));
    CHECK(intention_loss(p, i % 3).item() >= 0);
  }
  CHECK_THROWS_AS(intention_loss(ag::constant(uniform), 3), DomainError);
}

TEST_CASE("trajectory loss dispatch and linearity") {
  Rng rng(2);
  std::vector<Matrix> modes{standard_normal(5, 2, rng), standard_normal(5, 2, rng), standard_normal(5, 2, rng)};
  Matrix probs(1, 3);
  probs << 0.2, 0.5, 0.3;
  const MixturePrediction p = prediction_from(modes, probs);
  const std::vector<double> w{0.2, 0.58, 0.22};
  const Tensor zero = ag::scalar(0.0), one = ag::scalar(1.0);

  CHECK(trajectory_loss(p, modes[1], DatasetKind::HighwayLike, one, zero, 1, AgentClass::Vehicle, w).item() == 0.0);
  CHECK(trajectory_loss(p, modes[2], DatasetKind::Synthetic, one, zero, 2, AgentClass::Vehicle, w).item() == 0.0);

  const Matrix gt = standard_normal(5, 2, rng);
  const double nll = mixture_nll(p, gt, 0).item();
  CHECK(trajectory_loss(p, gt, DatasetKind::Synthetic, zero, ag::scalar(0.3), 0, AgentClass::Vehicle, w).item() ==
        doctest::Approx(0.3 * nll).epsilon(1e-14));

  for (DatasetKind kind : {DatasetKind::Synthetic, DatasetKind::NuscenesLike, DatasetKind::ApolloscapeLike}) {
    const double base =
        trajectory_loss(p, gt, kind, ag::scalar(0.7), ag::scalar(0.1), 2, AgentClass::Pedestrian, w).item();
    const double twice =
        trajectory_loss(p, gt, kind, ag::scalar(1.4), ag::scalar(0.2), 2, AgentClass::Pedestrian, w).item();
    CHECK(twice == doctest::Approx(2 * base).epsilon(1e-14));
  }

  double best = 1e300;
  for (const auto& m : modes) best = std::min(best, brute_ade(m, gt));
  CHECK(displacement_loss(p, gt, DatasetKind::NuscenesLike, 0, AgentClass::Vehicle, w).item() ==
        doctest::Approx(best).epsilon(1e-14));
  CHECK(displacement_loss(p, gt, DatasetKind::ApolloscapeLike, 1, AgentClass::Bicycle, w).item() ==
        doctest::Approx(0.22 * brute_ade(modes[1], gt)).epsilon(1e-14));
  double sq = 0;
  for (Index t = 0; t < 5; ++t) sq += (modes[0].row(t) - gt.row(t)).squaredNorm();
  CHECK(displacement_loss(p, gt, DatasetKind::HighwayLike, 0, AgentClass::Vehicle, w).item() ==
        doctest::Approx(std::sqrt(sq / 5)).epsilon(1e-14));
  CHECK_THROWS_AS(displacement_loss(p, gt, DatasetKind::ApolloscapeLike, 1, AgentClass::Bicycle, {1.0}), ConfigError);
  CHECK_THROWS_AS(dataset_kind_from_string("kitti"), ConfigError);
}

TEST_CASE("loss weights start at their configured values") {
  nn::ParamStore store(3);
  TrainConfig cfg;
  cfg.lambda_0 = {0.7, true};
  cfg.lambda_1 = {0.05, true};
  LossWeights w(store, cfg);
  const auto v = w.values();
  CHECK(v[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(v[1] == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(v[2] == 1.0);
  CHECK(v[3] == 1.0);
  CHECK(store.in_group("loss").size() == 2);
  CHECK(w.regulariser().item() == doctest::Approx(-std::log(0.7) - std::log(0.05)).epsilon(1e-12));
  cfg.lambda_int = {0.0, true};
  CHECK_THROWS_AS(LossWeights(store, cfg), ConfigError);
}

TEST_CASE("full-model gradients match finite differences") {
  Config cfg = testing::tiny_config();
  cfg.train.lambda_0 = {1.0, true};
  cfg.train.lambda_1 = {0.05, true};
  CausalTrajModel model(cfg.model, 21);
  const Scene s = testing::tiny_scenes(cfg, 1)[0];
  const BackdoorSet set = model.sample_backdoor(s, 4);
  LossWeights w(model.params(), cfg.train);
  make_trainable(model.params(), true);
  auto loss = [&] { return scene_loss(model, w, cfg.train, s, &set, 0).total + w.regulariser(); };
  auto r = testing::gradcheck(loss, model.params().trainable(), 1e-5, 1e-6, 12);
  make_trainable(model.params(), false);
  CHECK(r.checked > 400);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("diffusion stage preconditions and determinism") {
  Config cfg = testing::tiny_config();
  cfg.train.diffusion_steps = 30;
  const auto scenes = testing::tiny_scenes(cfg, 6);
  CausalTrajModel a(cfg.model, 1), b(cfg.model, 1);
  CHECK_THROWS_AS(train_diffusion(a, {}, cfg), ConfigError);
  Config d = testing::tiny_config(Variant::D);
  CausalTrajModel dm(d.model, 1);
  CHECK_THROWS_AS(train_diffusion(dm, scenes, d), UsageError);

  const TrainResult ra = train_diffusion(a, scenes, cfg), rb = train_diffusion(b, scenes, cfg);
  REQUIRE(ra.log.size() == 30);
  for (std::size_t i = 0; i < ra.log.size(); ++i) CHECK(ra.log[i].loss == rb.log[i].loss);
  CHECK(ra.checkpoint.stage == "diffusion");
  CHECK(checkpoint_to_json(ra.checkpoint) == checkpoint_to_json(rb.checkpoint));
  CHECK(a.diffusion_clip() > 0);
  CHECK(a.params().trainable().empty());
}

TEST_CASE("diffusion training beats the zero-noise-prediction baseline") {
  Config cfg;
  cfg.generator.bev_size = 16;
  cfg.train.diffusion_steps = 500;
  const auto scenes = generate_split(cfg.generator, cfg.generator.rho, 200, 5, "dm");
  CausalTrajModel model(cfg.model, 2);
  const TrainResult r = train_diffusion(model, scenes, cfg);
  // Predicting eps = 0 costs E||eps||^2 = N_m * D per set; estimate it by Monte Carlo.
  Rng rng(6);
  double baseline = 0;
  const Index rows = model.spatial_tokens(scenes[0]).rows();
  for (int i = 0; i < 2000; ++i) baseline += standard_normal(rows, cfg.model.encoders.dim, rng).squaredNorm();
  baseline /= 2000;
  double tail = 0;
  for (std::size_t i = r.log.size() - 50; i < r.log.size(); ++i) tail += r.log[i].loss;
  tail /= 50;
  CHECK(tail < 0.5 * baseline);
}

TEST_CASE("full stage requires a diffusion checkpoint of the right stage") {
  Config cfg = testing::tiny_config();
  cfg.train.max_steps = 2;
  const auto scenes = testing::tiny_scenes(cfg, 4);
  CausalTrajModel model(cfg.model, 1);
  CHECK_THROWS_AS(train_full(model, scenes, nullptr, cfg), UsageError);
  const Checkpoint wrong = make_checkpoint(model, cfg, "full", 0);
  CHECK_THROWS_AS(train_full(model, scenes, &wrong, cfg), UsageError);
  CHECK_THROWS_AS(train_full(model, {}, &wrong, cfg), ConfigError);

  std::vector<Scene> unlabeled = scenes;
  unlabeled[1].maneuver.reset();
  const Checkpoint ok = make_checkpoint(model, cfg, "diffusion", 0);
  CHECK_THROWS_AS(train_full(model, unlabeled, &ok, cfg), ValidationError);

  Config d = testing::tiny_config(Variant::D);
  d.train.max_steps = 2;
  CausalTrajModel dm(d.model, 1);
  CHECK_NOTHROW(train_full(dm, scenes, nullptr, d));
}

TEST_CASE("stage 2 leaves the diffusion weights untouched") {
  Config cfg = testing::tiny_config();
  cfg.train.diffusion_steps = 10;
  cfg.train.max_steps = 15;
  cfg.train.batch_size = 2;
  const auto scenes = testing::tiny_scenes(cfg, 4);
  CausalTrajModel model(cfg.model, 4);
  const TrainResult stage1 = train_diffusion(model, scenes, cfg);
  const std::uint64_t before = model.params().checksum("diffusion");
  const auto values = model.params().values("diffusion");
  const TrainResult stage2 = train_full(model, scenes, &stage1.checkpoint, cfg);
  CHECK(model.params().checksum("diffusion") == before);
  CHECK(model.params().values("diffusion") == values);
  for (const auto& l : stage2.log) CHECK(l.diffusion_grad_norm == 0.0);
  CHECK(stage2.checkpoint.stage == "full");
}

TEST_CASE("freezing the spatial encoder and learnable weights") {
  Config cfg = testing::tiny_config();
  cfg.train.diffusion_steps = 5;
  cfg.train.max_steps = 20;
  cfg.train.batch_size = 2;
  cfg.train.freeze_spatial = true;
  cfg.train.lambda_0 = {1.0, true};
  const auto scenes = testing::tiny_scenes(cfg, 4);
  CausalTrajModel model(cfg.model, 5);
  const TrainResult stage1 = train_diffusion(model, scenes, cfg);
  const std::uint64_t spatial = model.params().checksum("spatial");
  const std::uint64_t decoder = model.params().checksum("decoder");
  const TrainResult r = train_full(model, scenes, &stage1.checkpoint, cfg);
  CHECK(model.params().checksum("spatial") == spatial);
  CHECK(model.params().checksum("decoder") != decoder);
  CHECK(r.lambdas[0] != 1.0);
  CHECK(r.lambdas[1] == 0.05);
  CHECK(r.lambdas[2] == 1.0);
  CHECK(r.lambdas[3] == 1.0);
}

TEST_CASE("a fixed seed reproduces stage 2 exactly") {
  Config cfg = testing::tiny_config();
  cfg.train.diffusion_steps = 5;
  cfg.train.max_steps = 6;
  cfg.train.batch_size = 3;
  cfg.train.augment_probability = 0.5;
  const auto scenes = testing::tiny_scenes(cfg, 5);
  auto run = [&] {
    CausalTrajModel m(cfg.model, 8);
    const TrainResult s1 = train_diffusion(m, scenes, cfg);
    return checkpoint_to_json(train_full(m, scenes, &s1.checkpoint, cfg).checkpoint);
  };
  CHECK(run() == run());
}

TEST_CASE("stage 2 fits a small scene set") {
  Config cfg = testing::tiny_config();
  cfg.model.encoders.dim = 16;
  cfg.model.diffusion.fixed_per_scene = true;
  cfg.train.diffusion_steps = 50;
  cfg.train.max_steps = 300;
  cfg.train.batch_size = 4;
  cfg.train.learning_rate = 3e-3;
  const auto scenes = testing::tiny_scenes(cfg, 4);
  CausalTrajModel model(cfg.model, 6);
  const TrainResult s1 = train_diffusion(model, scenes, cfg);
  const TrainResult r = train_full(model, scenes, &s1.checkpoint, cfg);
  double head = 0, tail = 0;
  for (int i = 0; i < 10; ++i) {
    head += r.log[static_cast<std::size_t>(i)].loss;
    tail += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  CHECK(tail < 0.3 * head);
}

TEST_CASE("step log CSV") {
  std::vector<StepLog> log{{1, "full", 2.5, 1.0, 1.5, 0.25, 0.0}, {2, "full", 2.0, 0.75, 1.25, 0.125, 0.0}};
  const auto path = std::filesystem::temp_directory_path() / "causaltraj_log_test.csv";
  write_log_csv(log, path.string());
  std::ifstream f(path);
  std::string header, first;
  std::getline(f, header);
  std::getline(f, first);
  std::filesystem::remove(path);
  CHECK(header == "step,stage,loss,intention,trajectory,grad_norm,diffusion_grad_norm");
  CHECK(first == "1,full,2.5,1,1.5,0.25,0");
}
