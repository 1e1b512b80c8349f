#include "causaltraj/plugin.hpp"

#include "causaltraj/errors.hpp"
#include "causaltraj/optim.hpp"

#include <numeric>

namespace causaltraj {

ReferenceBaseline::ReferenceBaseline(nn::ParamStore& store, const ModelConfig& cfg, double dt, const std::string& g)
    : cfg_(cfg), dt_(dt), spatial_(store, cfg.encoders, cfg.map_width) {
  if (!(dt > 0)) throw ConfigError("baseline: dt must be positive");
  const int d = cfg.encoders.dim;
  const Index hist = 2 * static_cast<Index>(cfg.history_frames + 1);
  const Index ctx = 2 + 2 * static_cast<Index>(d);
  history_ = nn::Linear(store, g + ".history", hist, d, g, false);
  map_ = nn::Linear(store, g + ".map", d, d, g);
  const Index k = cfg.decoder.maneuvers, tf = cfg.decoder.future_frames;
  residual_ = nn::Mlp(store, g + ".residual", ctx, d, k * tf * 2, g);
  spread_ = nn::Mlp(store, g + ".spread", ctx, d, k * tf * 3, g);
  logits_ = nn::Linear(store, g + ".logits", ctx, k, g);
}

Matrix ReferenceBaseline::spatial_tokens(const Scene& s) const {
  ag::NoGradGuard ng;
  return spatial_.encode(s.map).value();
}

Tensor ReferenceBaseline::encode(const Scene& s, const Tensor& spatial) const {
  const Index h = s.target.history_length;
  if (h != cfg_.history_frames + 1) throw ConfigError("baseline: history length mismatch");
  const Matrix& p = s.target.trajectory.points;
  const double scale = cfg_.encoders.input_scale;
  Matrix v = Matrix::Zero(1, 2);
  if (h >= 2) v = (p.row(h - 1) - p.row(h - 2)) / dt_ * scale;
  Matrix hist(1, 2 * h);
  for (Index t = 0; t < h; ++t) hist.block(0, 2 * t, 1, 2) = p.row(t) * scale;
  Tensor map_feat = map_(ag::mean_rows(spatial));
  return ag::concat_cols({ag::constant(v), history_(ag::constant(hist)), map_feat});
}

MixturePrediction ReferenceBaseline::decode(const Tensor& context) const {
  using namespace ag;
  const Index k = cfg_.decoder.maneuvers, tf = cfg_.decoder.future_frames;
  const double inv_scale = 1.0 / cfg_.encoders.input_scale;
  Tensor res = residual_(context);
  Tensor spr = spread_(context);
  std::vector<Tensor> mx, my, sx, sy, rr;
  // Constant-velocity term: v * (t + 1) * dt, v recovered from the context.
  Matrix steps(1, tf);
  for (Index t = 0; t < tf; ++t) steps(0, t) = static_cast<double>(t + 1) * dt_ * inv_scale;
  Tensor vx = slice_cols(context, 0, 1), vy = slice_cols(context, 1, 1);
  Tensor cv_x = matmul(vx, constant(steps)), cv_y = matmul(vy, constant(steps));
  for (Index m = 0; m < k; ++m) {
    mx.push_back(cv_x + scale(slice_cols(res, m * tf * 2, tf), cfg_.decoder.position_scale));
    my.push_back(cv_y + scale(slice_cols(res, m * tf * 2 + tf, tf), cfg_.decoder.position_scale));
    sx.push_back(slice_cols(spr, m * tf * 3, tf));
    sy.push_back(slice_cols(spr, m * tf * 3 + tf, tf));
    rr.push_back(slice_cols(spr, m * tf * 3 + 2 * tf, tf));
  }
  auto rows = [](const std::vector<Tensor>& v) { return concat_rows(std::span<const Tensor>(v)); };
  MixturePrediction p;
  p.mu_x = rows(mx);
  p.mu_y = rows(my);
  p.sigma_x = add_scalar(softplus(rows(sx)), cfg_.decoder.sigma_floor);
  p.sigma_y = add_scalar(softplus(rows(sy)), cfg_.decoder.sigma_floor);
  p.rho = scale(ag::tanh(rows(rr)), 0.999);
  p.probs = softmax_rows(logits_(context));
  check_invariants(p);
  return p;
}

CausalWrapped::CausalWrapped(const BaselinePredictor& baseline, const EpsilonModel& denoiser,
                             const DiffusionSchedule& schedule, double clip, int dim, int n, CombineSpace space)
    : baseline_(&baseline), denoiser_(&denoiser), schedule_(&schedule), clip_(clip), dim_(dim), n_(n), space_(space) {
  if (n < 1) throw UsageError("wrap: backdoor set size must be >= 1");
  if (space == CombineSpace::Context && !baseline.exposes_context())
    throw UsageError("wrap: baseline does not expose a combinable context");
}

BackdoorSet CausalWrapped::sample(const Scene& s, std::uint64_t seed) const {
  const Matrix tokens = baseline_->spatial_tokens(s);
  if (tokens.cols() != dim_) throw UsageError("wrap: baseline spatial tokens have width " +
                                              std::to_string(tokens.cols()) + ", denoiser expects " +
                                              std::to_string(dim_));
  return sample_backdoor_set(tokens, n_, *denoiser_, *schedule_, seed, clip_);
}

WrappedOutput CausalWrapped::forward(const Scene& s, const BackdoorSet& set) const {
  if (set.size() == 0) throw DomainError("wrap: backdoor set is empty");
  Scene cf = s;
  cf.target = zero_history(s.target);

  std::vector<CompositeToken> fac, cnt;
  for (const Matrix& sample : set.samples) {
    const Tensor key = ag::constant(sample);
    fac.push_back({baseline_->encode(s, key), TokenKind::Factual});
    cnt.push_back({baseline_->encode(cf, key), TokenKind::Counterfactual});
  }
  WrappedOutput out;
  const CompositeToken f = backdoor_average(fac), c = backdoor_average(cnt);
  out.factual = f.values;
  out.counterfactual = c.values;
  const bool in_context = space_ == CombineSpace::Context || (space_ == CombineSpace::Auto && baseline_->exposes_context());
  if (in_context) {
    out.prediction = baseline_->decode(causal_combine(f, c).values);
  } else {
    std::vector<MixturePrediction> pf, pc;
    for (std::size_t i = 0; i < fac.size(); ++i) {
      pf.push_back(baseline_->decode(fac[i].values));
      pc.push_back(baseline_->decode(cnt[i].values));
    }
    out.prediction = combine_predictions(average_predictions(pf), average_predictions(pc));
  }
  check_invariants(out.prediction);
  return out;
}

DiffusionBundle::DiffusionBundle(const Checkpoint& ckpt) {
  if (ckpt.stage != "diffusion" && ckpt.stage != "full")
    throw UsageError("wrap: checkpoint stage '" + ckpt.stage + "' carries no diffusion weights");
  const Config cfg = config_from_json(ckpt.config_json);
  dim_ = cfg.model.encoders.dim;
  denoiser_ = Denoiser(store_, dim_, cfg.model.diffusion.hidden, cfg.model.diffusion.blocks, cfg.model.attention.heads);
  store_.buffer("diffusion.clip", 1, 1, 0.0, "diffusion");
  for (const auto& name : store_.names())
    if (!ckpt.weights.count(name)) throw UsageError("wrap: checkpoint lacks diffusion weight " + name);
  store_.load_values(ckpt.weights, "diffusion");
  schedule_ = DiffusionSchedule::make(cfg.model.diffusion.steps, cfg.model.diffusion.schedule);
  clip_ = store_.get("diffusion.clip").value()(0, 0);
}

CausalWrapped wrap(const BaselinePredictor& baseline, const DiffusionBundle& d, int n, CombineSpace space) {
  return CausalWrapped(baseline, d.denoiser(), d.schedule(), d.clip(), d.dim(), n, space);
}

std::vector<StepLog> train_predictor(const TrainForward& forward, std::vector<Tensor> params,
                                     const std::vector<Scene>& scenes, const TrainConfig& cfg) {
  if (scenes.empty()) throw ConfigError("training needs at least one scene");
  std::vector<bool> was;
  for (auto& p : params) {
    was.push_back(p.requires_grad());
    p.set_requires_grad(true);
  }
  optim::Adam adam(params, {cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, 0xba5e));
  const long per_epoch = static_cast<long>((scenes.size() + cfg.batch_size - 1) / cfg.batch_size);
  const long total = cfg.max_steps > 0 ? cfg.max_steps : per_epoch * cfg.epochs;
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const Tensor l0 = ag::scalar(cfg.lambda_0.value), l1 = ag::scalar(cfg.lambda_1.value);
  std::vector<StepLog> log;
  for (long step = 1; step <= total; ++step) {
    adam.zero_grad();
    std::vector<Tensor> terms;
    const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), scenes.size());
    for (std::size_t i = 0; i < b; ++i) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const Scene& s = scenes[order[cursor++]];
      if (!s.maneuver) throw ValidationError("maneuver", "scene " + s.id + " has no maneuver label");
      const MixturePrediction p = forward(s, rng());
      const Matrix gt = s.target_future();
      terms.push_back(ag::scale(intention_loss(p.probs, *s.maneuver), cfg.lambda_int.value) +
                      ag::scale(trajectory_loss(p, gt, cfg.dataset_kind, l0, l1, *s.maneuver, s.target.agent_class,
                                                cfg.class_weights),
                                cfg.lambda_traj.value));
    }
    Tensor loss = ag::scale(ag::sum(ag::concat_rows(std::span<const Tensor>(terms))), 1.0 / static_cast<double>(b));
    if (!std::isfinite(loss.value()(0, 0))) throw NumericalError("training diverged at step " + std::to_string(step));
    ag::backward(loss);
    StepLog l{step, "baseline", loss.value()(0, 0), 0, 0, optim::clip_grad_norm(params, cfg.clip_norm), 0};
    adam.step();
    log.push_back(l);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].set_requires_grad(was[i]);
    params[i].zero_grad();
  }
  return log;
}

}  // namespace causaltraj
