#include "causaltraj/training.hpp"

#include "causaltraj/errors.hpp"
#include "causaltraj/optim.hpp"
#include "causaltraj/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace causaltraj {

Tensor intention_loss(const Tensor& probs, int gt, bool* clamped) {
  if (gt < 0 || gt >= probs.cols()) throw DomainError("intention_loss: maneuver index out of range");
  Tensor p = ag::slice_cols(probs, gt, 1);
  const bool low = p.value()(0, 0) < 1e-12;
  if (clamped) *clamped = low;
  return ag::neg(ag::log(ag::clamp_min(p, 1e-12)));
}

namespace {

Tensor squared_distances(const MixturePrediction& pred, const Matrix& gt, int k) {
  Tensor dx = ag::row(pred.mu_x, k) - ag::constant(gt.col(0).transpose());
  Tensor dy = ag::row(pred.mu_y, k) - ag::constant(gt.col(1).transpose());
  return ag::square(dx) + ag::square(dy);
}

Tensor mode_ade(const MixturePrediction& pred, const Matrix& gt, int k) {
  return ag::mean(ag::sqrt(squared_distances(pred, gt, k)));
}

}  // namespace

Tensor displacement_loss(const MixturePrediction& pred, const Matrix& gt, DatasetKind kind, int maneuver,
                         AgentClass cls, const std::vector<double>& class_weights) {
  if (gt.rows() != pred.frames() || gt.cols() < 2) throw DomainError("trajectory loss: ground truth must be t_f x 2");
  switch (kind) {
    case DatasetKind::NuscenesLike: {
      int best = 0;
      std::vector<Tensor> ades;
      for (int k = 0; k < pred.maneuvers(); ++k) {
        ades.push_back(mode_ade(pred, gt, k));
        if (ades[static_cast<std::size_t>(k)].value()(0, 0) < ades[static_cast<std::size_t>(best)].value()(0, 0))
          best = k;
      }
      return ades[static_cast<std::size_t>(best)];
    }
    case DatasetKind::ApolloscapeLike: {
      const auto c = static_cast<std::size_t>(cls);
      if (c >= class_weights.size()) throw ConfigError("class_weights must cover vehicle, pedestrian, bicycle");
      return ag::scale(mode_ade(pred, gt, maneuver), class_weights[c]);
    }
    case DatasetKind::HighwayLike:
    case DatasetKind::Synthetic:
      return ag::sqrt(ag::mean(squared_distances(pred, gt, maneuver)));
  }
  throw ConfigError("unknown dataset kind");
}

Tensor trajectory_loss(const MixturePrediction& pred, const Matrix& gt, DatasetKind kind, const Tensor& l0,
                       const Tensor& l1, int maneuver, AgentClass cls, const std::vector<double>& class_weights) {
  return l0 * displacement_loss(pred, gt, kind, maneuver, cls, class_weights) + l1 * mixture_nll(pred, gt, maneuver);
}

LossWeights::LossWeights(nn::ParamStore& store, const TrainConfig& cfg) {
  const LossWeight* w[4] = {&cfg.lambda_0, &cfg.lambda_1, &cfg.lambda_int, &cfg.lambda_traj};
  static const char* names[4] = {"loss.lambda_0", "loss.lambda_1", "loss.lambda_int", "loss.lambda_traj"};
  for (int i = 0; i < 4; ++i) {
    fixed_[i] = w[i]->value;
    learnable_[i] = w[i]->learnable;
    if (!learnable_[i]) continue;
    if (!(w[i]->value > 0)) throw ConfigError(std::string(names[i]) + ": learnable weights must start positive");
    // Inverse softplus so the initial weight equals the configured value.
    const double raw = w[i]->value > 30 ? w[i]->value : std::log(std::expm1(w[i]->value));
    raw_[i] = store.contains(names[i]) ? store.get(names[i]) : store.constant(names[i], 1, 1, raw, "loss");
  }
}

Tensor LossWeights::get(int i) const {
  return learnable_[i] ? ag::softplus(raw_[i]) : ag::scalar(fixed_[i]);
}

Tensor LossWeights::regulariser() const {
  Tensor r = ag::scalar(0.0);
  for (int i = 0; i < 4; ++i)
    if (learnable_[i]) r = r - ag::log(get(i));
  return r;
}

std::vector<double> LossWeights::values() const {
  std::vector<double> out;
  for (int i = 0; i < 4; ++i) out.push_back(get(i).value()(0, 0));
  return out;
}

SceneLoss scene_loss(const CausalTrajModel& model, const LossWeights& w, const TrainConfig& cfg, const Scene& s,
                     const BackdoorSet* backdoor, std::uint64_t seed) {
  if (!s.maneuver) throw ValidationError("maneuver", "training scenes need a maneuver label");
  const ModelOutput out = model.forward(s, backdoor, seed);
  const Matrix gt = s.target_future();
  Tensor l_int = intention_loss(out.prediction.probs, *s.maneuver);
  Tensor l_traj = trajectory_loss(out.prediction, gt, cfg.dataset_kind, w.lambda_0(), w.lambda_1(), *s.maneuver,
                                  s.target.agent_class, cfg.class_weights);
  SceneLoss r;
  r.total = w.lambda_int() * l_int + w.lambda_traj() * l_traj;
  r.intention = l_int.value()(0, 0);
  r.trajectory = l_traj.value()(0, 0);
  return r;
}

namespace {

void require_scenes(const std::vector<Scene>& scenes) {
  if (scenes.empty()) throw ConfigError("training needs at least one scene");
}

void set_only_trainable(nn::ParamStore& store, const std::vector<std::string>& groups) {
  std::vector<std::string> all;
  for (const auto& n : store.names()) all.push_back(store.group_of(n));
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  for (const auto& g : all) store.set_group_trainable(g, std::find(groups.begin(), groups.end(), g) != groups.end());
}

double grad_norm_of(const std::vector<Tensor>& params) {
  double s = 0;
  for (const auto& p : params)
    if (p.has_grad()) s += p.grad().squaredNorm();
  return std::sqrt(s);
}

}  // namespace

TrainResult train_diffusion(CausalTrajModel& model, const std::vector<Scene>& scenes, const Config& cfg,
                            const StepCallback& on_step) {
  require_scenes(scenes);
  if (!model.toggles().causal) throw UsageError("variant " + std::string(to_string(cfg.model.variant)) +
                                                " has no diffusion module to train");
  validate(cfg.train);
  std::vector<Matrix> tokens;
  double max_abs = 0;
  for (const auto& s : scenes) {
    tokens.push_back(model.spatial_tokens(s));
    max_abs = std::max(max_abs, tokens.back().cwiseAbs().maxCoeff());
  }
  model.set_diffusion_clip(1.5 * max_abs);

  nn::ParamStore& store = model.params();
  set_only_trainable(store, {"diffusion"});
  std::vector<Tensor> params = store.trainable();
  optim::Adam adam(params, {cfg.train.learning_rate});
  const DiffusionNorm norm = diffusion_norm_from_string(cfg.model.diffusion.norm);
  Rng rng(derive_seed(cfg.train.seed, 0xd1ff));
  std::uniform_int_distribution<std::size_t> pick(0, tokens.size() - 1);

  TrainResult result;
  for (long step = 1; step <= cfg.train.diffusion_steps; ++step) {
    std::vector<Matrix> batch;
    for (int b = 0; b < cfg.train.batch_size; ++b) batch.push_back(tokens[pick(rng)]);
    adam.zero_grad();
    Tensor loss = diffusion_loss(batch, model.denoiser(), model.schedule(), rng, norm);
    const double lv = loss.value()(0, 0);
    if (!std::isfinite(lv)) throw NumericalError("diffusion training diverged at step " + std::to_string(step));
    ag::backward(loss);
    StepLog log{step, "diffusion", lv, 0, 0, optim::clip_grad_norm(params, cfg.train.clip_norm), 0};
    adam.step();
    result.log.push_back(log);
    if (on_step) on_step(log);
  }
  set_only_trainable(store, {});
  result.checkpoint = make_checkpoint(model, cfg, "diffusion", cfg.train.diffusion_steps);
  return result;
}

TrainResult train_full(CausalTrajModel& model, const std::vector<Scene>& scenes, const Checkpoint* diffusion_ckpt,
                       const Config& cfg, const StepCallback& on_step) {
  require_scenes(scenes);
  validate(cfg.train);
  nn::ParamStore& store = model.params();
  const bool causal = model.toggles().causal;
  if (causal) {
    if (!diffusion_ckpt) throw UsageError("variant " + std::string(to_string(cfg.model.variant)) +
                                          " needs a diffusion checkpoint");
    if (diffusion_ckpt->stage != "diffusion")
      throw UsageError("expected a diffusion-stage checkpoint, got stage '" + diffusion_ckpt->stage + "'");
    load_weights(model, *diffusion_ckpt, "spatial");
    load_weights(model, *diffusion_ckpt, "diffusion");
  }
  for (const auto& s : scenes)
    if (!s.maneuver) throw ValidationError("maneuver", "scene " + s.id + " has no maneuver label");

  LossWeights weights(store, cfg.train);
  std::vector<std::string> groups{"temporal", "bev", "attention", "fusion", "dual", "decoder", "loss"};
  if (!cfg.train.freeze_spatial) groups.push_back("spatial");
  set_only_trainable(store, groups);
  const std::vector<Tensor> frozen = store.in_group("diffusion");
  const std::uint64_t frozen_sum = store.checksum("diffusion");

  std::vector<Tensor> params = store.trainable();
  optim::Adam adam(params, {cfg.train.learning_rate});
  Rng rng(derive_seed(cfg.train.seed, 0xf011));

  // With a fixed backdoor set per scene the sets are drawn once up front.
  std::vector<BackdoorSet> fixed;
  if (causal && cfg.model.diffusion.fixed_per_scene)
    for (std::size_t i = 0; i < scenes.size(); ++i)
      fixed.push_back(model.sample_backdoor(scenes[i], derive_seed(cfg.train.seed, 0xbd00 + i)));

  const long per_epoch = static_cast<long>((scenes.size() + cfg.train.batch_size - 1) / cfg.train.batch_size);
  const long total = cfg.train.max_steps > 0 ? cfg.train.max_steps : per_epoch * cfg.train.epochs;
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TrainResult result;
  for (long step = 1; step <= total; ++step) {
    std::vector<std::size_t> batch;
    while (static_cast<int>(batch.size()) < std::min<int>(cfg.train.batch_size, static_cast<int>(scenes.size()))) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    adam.zero_grad();
    std::vector<Tensor> terms;
    double l_int = 0, l_traj = 0;
    for (std::size_t idx : batch) {
      const Scene* s = &scenes[idx];
      Scene augmented;
      if (cfg.train.augment_probability > 0 && unit(rng) < cfg.train.augment_probability) {
        std::uniform_int_distribution<std::size_t> a(0, cfg.train.augment_alphas.size() - 1);
        PerturbationSpec p;
        p.kind = PerturbationSpec::Kind::Noise;
        p.alpha = cfg.train.augment_alphas[a(rng)];
        p.seed = rng();
        augmented = perturb_scene(*s, p);
        s = &augmented;
      }
      const std::uint64_t seed = rng();
      SceneLoss sl = scene_loss(model, weights, cfg.train, *s, fixed.empty() ? nullptr : &fixed[idx], seed);
      terms.push_back(sl.total);
      l_int += sl.intention;
      l_traj += sl.trajectory;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    Tensor loss = ag::scale(ag::sum(ag::concat_rows(std::span<const Tensor>(terms))), inv) + weights.regulariser();
    const double lv = loss.value()(0, 0);
    if (!std::isfinite(lv)) throw NumericalError("training diverged at step " + std::to_string(step));
    ag::backward(loss);
    StepLog log{step, "full", lv, l_int * inv, l_traj * inv, 0, grad_norm_of(frozen)};
    log.grad_norm = optim::clip_grad_norm(params, cfg.train.clip_norm);
    adam.step();
    result.log.push_back(log);
    if (on_step) on_step(log);
  }
  set_only_trainable(store, {});
  if (store.checksum("diffusion") != frozen_sum)
    throw NumericalError("diffusion weights changed during stage 2 (freeze contract violated)");
  result.lambdas = weights.values();
  result.checkpoint = make_checkpoint(model, cfg, "full", total);
  return result;
}

void write_log_csv(const std::vector<StepLog>& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  f << "step,stage,loss,intention,trajectory,grad_norm,diffusion_grad_norm\n" << std::setprecision(17);
  for (const auto& l : log)
    f << l.step << ',' << l.stage << ',' << l.loss << ',' << l.intention << ',' << l.trajectory << ','
      << l.grad_norm << ',' << l.diffusion_grad_norm << '\n';
}

}  // namespace causaltraj
