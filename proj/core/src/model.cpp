#include "causaltraj/model.hpp"

#include "causaltraj/errors.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace causaltraj {

CausalTrajModel::CausalTrajModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), toggles_(toggles_for(cfg.variant)), store_(seed) {
  validate(cfg);
  const int d = cfg.encoders.dim;
  spatial_ = SpatialEncoder(store_, cfg.encoders, cfg.map_width);
  temporal_ = TemporalEncoder(store_, cfg.encoders, cfg.state_width);
  if (toggles_.bev) bev_ = BevEncoder(store_, cfg.encoders);
  attention_ = MultiViewAttention(store_, d, cfg.attention);
  fusion_ = ProgressiveFusion(store_, d, cfg.decoder.maneuvers, cfg.attention.heads);
  if (toggles_.dual_scale)
    dual_ = DualScaleFusion(store_, d, cfg.fusion, cfg.history_frames + 1, cfg.encoders.input_scale);
  decoder_ = CausalDecoder(store_, d, cfg.decoder);
  if (toggles_.causal) {
    denoiser_ = Denoiser(store_, d, cfg.diffusion.hidden, cfg.diffusion.blocks, cfg.attention.heads);
    schedule_ = DiffusionSchedule::make(cfg.diffusion.steps, cfg.diffusion.schedule);
    clip_ = store_.buffer("diffusion.clip", 1, 1, 0.0, "diffusion");
  }
}

double CausalTrajModel::diffusion_clip() const { return clip_.defined() ? clip_.value()(0, 0) : 0.0; }

void CausalTrajModel::set_diffusion_clip(double clip) {
  if (!clip_.defined()) throw UsageError("variant has no diffusion module");
  if (!(clip >= 0)) throw DomainError("diffusion clip must be >= 0");
  clip_.mutable_value()(0, 0) = clip;
}

Matrix CausalTrajModel::spatial_tokens(const Scene& s) const {
  ag::NoGradGuard ng;
  return spatial_.encode(s.map).value();
}

BackdoorSet CausalTrajModel::sample_backdoor(const Scene& s, std::uint64_t seed) const {
  if (!toggles_.causal) throw UsageError("variant has no diffusion module");
  return sample_backdoor_set(spatial_tokens(s), cfg_.diffusion.samples, denoiser_, schedule_, seed, diffusion_clip());
}

ModelOutput CausalTrajModel::forward(const Scene& s, const BackdoorSet* backdoor, std::uint64_t seed) const {
  ModelOutput out;
  const int t_rec = effective_t_rec();

  // Spatial keys: the backdoor samples, or S^h itself without the causal branch.
  std::vector<Tensor> keys;
  if (toggles_.causal) {
    BackdoorSet drawn;
    if (!backdoor) {
      drawn = sample_backdoor(s, seed);
      backdoor = &drawn;
    }
    if (backdoor->size() == 0) throw DomainError("backdoor set is empty");
    for (const Matrix& m : backdoor->samples) keys.push_back(ag::constant(m));
  } else {
    keys.push_back(spatial_.encode(s.map));
  }

  TemporalTokens tt = temporal_.encode(s.target, s.neighbors);
  Tensor bev_tokens;
  if (toggles_.bev) bev_tokens = bev_.encode(s.bev);

  auto branch = [&](const Tensor& xh, std::vector<ContextToken>& ctxs, std::vector<AnchorQuery>& qs) {
    ViewContext xb;
    if (toggles_.bev) {
      xb = attention_.bev(xh, bev_tokens);
    } else {
      xb.value = ag::zeros(1, cfg_.encoders.dim);
      xb.valid = false;
    }
    const ViewContext xt = attention_.temporal(xh, tt.neighbors, tt.neighbor_mask);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      ctxs.push_back(attention_.context(xh, attention_.spatial(xh, keys[i]), xb, xt, static_cast<int>(i)));
      qs.push_back(fusion_.fuse(ctxs.back(), t_rec));
    }
  };

  branch(tt.target, out.contexts, out.queries);
  out.g = toggles_.dual_scale ? dual_(s.target, s.neighbors) : ag::zeros(1, cfg_.encoders.dim);
  for (const auto& q : out.queries) out.factual_samples.push_back(decoder_.compose(q, out.g, TokenKind::Factual));

  const bool token_mean = cfg_.decoder.backdoor_average == "token";
  const bool token_combine = cfg_.decoder.combine == "token";

  if (!toggles_.causal) {
    out.factual = out.factual_samples[0];
    out.decoder_input = out.factual.values;
    out.prediction = decoder_.decode(out.decoder_input);
    return out;
  }

  // Counterfactual branch: do(X = 0) on the target history only.
  const AgentTrack x_c = zero_history(s.target);
  branch(temporal_.encode_target(x_c), out.counterfactual_contexts, out.counterfactual_queries);
  out.g_c = toggles_.dual_scale ? dual_(x_c, s.neighbors) : ag::zeros(1, cfg_.encoders.dim);
  for (const auto& q : out.counterfactual_queries)
    out.counterfactual_samples.push_back(decoder_.compose(q, out.g_c, TokenKind::Counterfactual));

  if (token_mean) {
    out.factual = backdoor_average(out.factual_samples);
    out.counterfactual = backdoor_average(out.counterfactual_samples);
    if (token_combine) {
      out.decoder_input = causal_combine(out.factual, out.counterfactual).values;
      out.prediction = decoder_.decode(out.decoder_input);
    } else {
      out.decoder_input = out.factual.values;
      out.prediction = combine_predictions(decoder_.decode(out.factual.values), decoder_.decode(out.counterfactual.values));
    }
    return out;
  }

  // Backdoor mean over decoded predictions.
  std::vector<MixturePrediction> preds;
  for (std::size_t i = 0; i < out.factual_samples.size(); ++i) {
    if (token_combine) {
      preds.push_back(decoder_.decode(causal_combine(out.factual_samples[i], out.counterfactual_samples[i]).values));
    } else {
      preds.push_back(combine_predictions(decoder_.decode(out.factual_samples[i].values),
                                          decoder_.decode(out.counterfactual_samples[i].values)));
    }
  }
  out.factual = backdoor_average(out.factual_samples);
  out.counterfactual = backdoor_average(out.counterfactual_samples);
  out.prediction = average_predictions(preds);
  return out;
}

Checkpoint make_checkpoint(const CausalTrajModel& model, const Config& cfg, const std::string& stage, long step) {
  Checkpoint c;
  c.stage = stage;
  c.step = step;
  c.fingerprint = fingerprint(cfg);
  c.config_json = config_to_json(cfg, -1);
  c.weights = model.params().values();
  return c;
}

std::string checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json w = nlohmann::json::object();
  for (const auto& [name, m] : c.weights) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) data[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
    w[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
  }
  nlohmann::json j = {{"format", "causaltraj-checkpoint"},
                      {"version", Checkpoint::kVersion},
                      {"stage", c.stage},
                      {"step", c.step},
                      {"fingerprint", fingerprint_hex(c.fingerprint)},
                      {"config", nlohmann::json::parse(c.config_json)},
                      {"weights", std::move(w)}};
  return j.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  }
  try {
    if (j.at("format") != "causaltraj-checkpoint") throw ParseError("not a checkpoint file", 0);
    if (j.at("version").get<int>() != Checkpoint::kVersion)
      throw ParseError("unsupported checkpoint version " + j.at("version").dump(), 0);
    Checkpoint c;
    c.stage = j.at("stage").get<std::string>();
    c.step = j.at("step").get<long>();
    c.fingerprint = std::stoull(j.at("fingerprint").get<std::string>(), nullptr, 16);
    c.config_json = j.at("config").dump();
    for (const auto& [name, v] : j.at("weights").items()) {
      const Index r = v.at("rows").get<Index>(), cc = v.at("cols").get<Index>();
      const auto data = v.at("data").get<std::vector<double>>();
      if (static_cast<Index>(data.size()) != r * cc) throw ParseError("checkpoint: weight " + name + " has wrong size", 0);
      Matrix m(r, cc);
      for (Index i = 0; i < r; ++i)
        for (Index k = 0; k < cc; ++k) m(i, k) = data[static_cast<std::size_t>(i * cc + k)];
      c.weights.emplace(name, std::move(m));
    }
    if (fingerprint(config_from_json(c.config_json)) != c.fingerprint)
      throw ValidationError("fingerprint", "does not match the embedded config");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what(), 0);
  }
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f << checkpoint_to_json(c) << '\n';
  if (!f) throw IoError("failed writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_json(ss.str());
}

void load_weights(CausalTrajModel& model, const Checkpoint& c, const std::string& group) {
  model.params().load_values(c.weights, group);
}

}  // namespace causaltraj
