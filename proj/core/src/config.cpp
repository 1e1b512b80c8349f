#include "causaltraj/config.hpp"

#include "causaltraj/errors.hpp"
#include "causaltraj/rng.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

namespace causaltraj {

using nlohmann::json;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::A: return "A";
    case Variant::B: return "B";
    case Variant::C: return "C";
    case Variant::D: return "D";
    case Variant::E: return "E";
  }
  return "E";
}

Variant variant_from_string(const std::string& s) {
  if (s == "A") return Variant::A;
  if (s == "B") return Variant::B;
  if (s == "C") return Variant::C;
  if (s == "D") return Variant::D;
  if (s == "E") return Variant::E;
  throw ConfigError("unknown ablation variant '" + s + "' (expected A..E)");
}

VariantToggles toggles_for(Variant v) {
  VariantToggles t;
  switch (v) {
    case Variant::A: t.bev = false; break;
    case Variant::B: t.progressive = false; break;
    case Variant::C: t.dual_scale = false; break;
    case Variant::D: t.causal = false; break;
    case Variant::E: break;
  }
  return t;
}

const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Synthetic: return "synthetic";
    case DatasetKind::NuscenesLike: return "nuscenes-like";
    case DatasetKind::ApolloscapeLike: return "apolloscape-like";
    case DatasetKind::HighwayLike: return "highway-like";
  }
  return "synthetic";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "synthetic") return DatasetKind::Synthetic;
  if (s == "nuscenes-like") return DatasetKind::NuscenesLike;
  if (s == "apolloscape-like") return DatasetKind::ApolloscapeLike;
  if (s == "highway-like") return DatasetKind::HighwayLike;
  throw ConfigError("unknown dataset kind '" + s + "'");
}

namespace {

/// Reads keys from one JSON object, rejecting anything it was not asked for.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config key " + path_ + "." + k);
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key " + path_ + "." + key + " has the wrong type");
    }
  }

  void weight(const char* key, LossWeight& w) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (v.is_number()) {
      w.value = v.get<double>();
      return;
    }
    Reader r(v, path_ + "." + key);
    r.get("value", w.value);
    r.get("learnable", w.learnable);
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_model(const json& j, ModelConfig& m) {
  Reader r(j, "model");
  if (const json* e = r.child("encoders")) {
    Reader x(*e, r.path("encoders"));
    x.get("dim", m.encoders.dim);
    x.get("kernel_sizes", m.encoders.kernel_sizes);
    x.get("kernel_channels", m.encoders.kernel_channels);
    x.get("pyramid_grid", m.encoders.pyramid_grid);
    x.get("bev_prepool", m.encoders.bev_prepool);
    x.get("gat_heads", m.encoders.gat_heads);
    x.get("input_scale", m.encoders.input_scale);
  }
  if (const json* e = r.child("diffusion")) {
    Reader x(*e, r.path("diffusion"));
    x.get("steps", m.diffusion.steps);
    x.get("samples", m.diffusion.samples);
    x.get("schedule", m.diffusion.schedule);
    x.get("norm", m.diffusion.norm);
    x.get("blocks", m.diffusion.blocks);
    x.get("hidden", m.diffusion.hidden);
    x.get("fixed_per_scene", m.diffusion.fixed_per_scene);
  }
  if (const json* e = r.child("attention")) {
    Reader x(*e, r.path("attention"));
    x.get("heads", m.attention.heads);
    x.get("dropout", m.attention.dropout);
    x.get("residual", m.attention.residual);
  }
  if (const json* e = r.child("fusion")) {
    Reader x(*e, r.path("fusion"));
    x.get("t_rec", m.fusion.t_rec);
    x.get("grid_rows", m.fusion.grid_rows);
    x.get("grid_cols", m.fusion.grid_cols);
    x.get("cell_size", m.fusion.cell_size);
    x.get("fine_kernel", m.fusion.fine_kernel);
    x.get("channels", m.fusion.channels);
  }
  if (const json* e = r.child("decoder")) {
    Reader x(*e, r.path("decoder"));
    x.get("maneuvers", m.decoder.maneuvers);
    x.get("future_frames", m.decoder.future_frames);
    x.get("position_scale", m.decoder.position_scale);
    x.get("sigma_floor", m.decoder.sigma_floor);
    x.get("combine", m.decoder.combine);
    x.get("backdoor_average", m.decoder.backdoor_average);
  }
  std::string variant = to_string(m.variant);
  r.get("variant", variant);
  m.variant = variant_from_string(variant);
  r.get("history_frames", m.history_frames);
  r.get("state_width", m.state_width);
  r.get("map_width", m.map_width);
}

void read_train(const json& j, TrainConfig& t) {
  Reader r(j, "train");
  r.get("diffusion_steps", t.diffusion_steps);
  r.get("epochs", t.epochs);
  r.get("batch_size", t.batch_size);
  r.get("max_steps", t.max_steps);
  r.get("learning_rate", t.learning_rate);
  r.get("clip_norm", t.clip_norm);
  r.get("seed", t.seed);
  r.weight("lambda_0", t.lambda_0);
  r.weight("lambda_1", t.lambda_1);
  r.weight("lambda_int", t.lambda_int);
  r.weight("lambda_traj", t.lambda_traj);
  std::string kind = to_string(t.dataset_kind);
  r.get("dataset_kind", kind);
  t.dataset_kind = dataset_kind_from_string(kind);
  r.get("class_weights", t.class_weights);
  r.get("freeze_spatial", t.freeze_spatial);
  r.get("augment_probability", t.augment_probability);
  r.get("augment_alphas", t.augment_alphas);
}

void read_generator(const json& j, GeneratorConfig& g) {
  Reader r(j, "generator");
  r.get("train_scenes", g.train_scenes);
  r.get("test_scenes", g.test_scenes);
  r.get("t_h", g.history_frames);
  r.get("t_f", g.future_frames);
  r.get("dt", g.dt);
  r.get("rho", g.rho);
  r.get("label_noise", g.label_noise);
  r.get("pedestrian_probability", g.pedestrian_probability);
  r.get("polyline_points", g.polyline_points);
  r.get("bev_size", g.bev_size);
  r.get("bev_resolution", g.bev_resolution);
  r.get("min_speed", g.min_speed);
  r.get("max_speed", g.max_speed);
}

json weight_json(const LossWeight& w) { return {{"value", w.value}, {"learnable", w.learnable}}; }

json to_json_value(const Config& c) {
  const auto& m = c.model;
  json model = {
      {"encoders",
       {{"dim", m.encoders.dim},
        {"kernel_sizes", m.encoders.kernel_sizes},
        {"kernel_channels", m.encoders.kernel_channels},
        {"pyramid_grid", m.encoders.pyramid_grid},
        {"bev_prepool", m.encoders.bev_prepool},
        {"gat_heads", m.encoders.gat_heads},
        {"input_scale", m.encoders.input_scale}}},
      {"diffusion",
       {{"steps", m.diffusion.steps},
        {"samples", m.diffusion.samples},
        {"schedule", m.diffusion.schedule},
        {"norm", m.diffusion.norm},
        {"blocks", m.diffusion.blocks},
        {"hidden", m.diffusion.hidden},
        {"fixed_per_scene", m.diffusion.fixed_per_scene}}},
      {"attention",
       {{"heads", m.attention.heads}, {"dropout", m.attention.dropout}, {"residual", m.attention.residual}}},
      {"fusion",
       {{"t_rec", m.fusion.t_rec},
        {"grid_rows", m.fusion.grid_rows},
        {"grid_cols", m.fusion.grid_cols},
        {"cell_size", m.fusion.cell_size},
        {"fine_kernel", m.fusion.fine_kernel},
        {"channels", m.fusion.channels}}},
      {"decoder",
       {{"maneuvers", m.decoder.maneuvers},
        {"future_frames", m.decoder.future_frames},
        {"position_scale", m.decoder.position_scale},
        {"sigma_floor", m.decoder.sigma_floor},
        {"combine", m.decoder.combine},
        {"backdoor_average", m.decoder.backdoor_average}}},
      {"variant", to_string(m.variant)},
      {"history_frames", m.history_frames},
      {"state_width", m.state_width},
      {"map_width", m.map_width}};
  const auto& t = c.train;
  json train = {{"diffusion_steps", t.diffusion_steps},
                {"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"max_steps", t.max_steps},
                {"learning_rate", t.learning_rate},
                {"clip_norm", t.clip_norm},
                {"seed", t.seed},
                {"lambda_0", weight_json(t.lambda_0)},
                {"lambda_1", weight_json(t.lambda_1)},
                {"lambda_int", weight_json(t.lambda_int)},
                {"lambda_traj", weight_json(t.lambda_traj)},
                {"dataset_kind", to_string(t.dataset_kind)},
                {"class_weights", t.class_weights},
                {"freeze_spatial", t.freeze_spatial},
                {"augment_probability", t.augment_probability},
                {"augment_alphas", t.augment_alphas}};
  const auto& g = c.generator;
  json gen = {{"train_scenes", g.train_scenes},
              {"test_scenes", g.test_scenes},
              {"t_h", g.history_frames},
              {"t_f", g.future_frames},
              {"dt", g.dt},
              {"rho", g.rho},
              {"label_noise", g.label_noise},
              {"pedestrian_probability", g.pedestrian_probability},
              {"polyline_points", g.polyline_points},
              {"bev_size", g.bev_size},
              {"bev_resolution", g.bev_resolution},
              {"min_speed", g.min_speed},
              {"max_speed", g.max_speed}};
  return {{"model", model}, {"train", train}, {"generator", gen}};
}

}  // namespace

void validate(const ModelConfig& c) {
  const auto& e = c.encoders;
  if (e.dim < 1) throw ConfigError("model.encoders.dim must be >= 1");
  if (e.kernel_sizes.empty()) throw ConfigError("model.encoders.kernel_sizes must not be empty");
  for (int k : e.kernel_sizes)
    if (k < 1 || k % 2 == 0) throw ConfigError("model.encoders.kernel_sizes must be odd and positive");
  if (e.kernel_channels < 1 || e.pyramid_grid < 1 || e.bev_prepool < 1)
    throw ConfigError("model.encoders channel/grid/prepool must be >= 1");
  if (e.gat_heads < 1 || e.dim % e.gat_heads != 0) throw ConfigError("model.encoders.gat_heads must divide dim");
  if (!(e.input_scale > 0)) throw ConfigError("model.encoders.input_scale must be positive");
  const auto& d = c.diffusion;
  if (d.steps < 1) throw ConfigError("model.diffusion.steps must be >= 1");
  if (d.samples < 1) throw ConfigError("model.diffusion.samples must be >= 1");
  if (d.schedule != "cosine" && d.schedule != "linear") throw ConfigError("model.diffusion.schedule: cosine|linear");
  if (d.norm != "squared" && d.norm != "l2") throw ConfigError("model.diffusion.norm: squared|l2");
  if (d.blocks < 1) throw ConfigError("model.diffusion.blocks must be >= 1");
  if (d.hidden < 1) throw ConfigError("model.diffusion.hidden must be >= 1");
  if (c.attention.heads < 1 || e.dim % c.attention.heads != 0)
    throw ConfigError("model.attention.heads must divide dim");
  if (c.attention.dropout != 0.0) throw ConfigError("model.attention.dropout other than 0 is not supported");
  if (c.fusion.t_rec < 0) throw ConfigError("model.fusion.t_rec must be >= 0");
  if (c.fusion.grid_rows < 1 || c.fusion.grid_cols < 1 || !(c.fusion.cell_size > 0))
    throw ConfigError("model.fusion grid must be non-empty with positive cells");
  if (c.fusion.fine_kernel < 1 || c.fusion.fine_kernel % 2 == 0)
    throw ConfigError("model.fusion.fine_kernel must be odd");
  if (c.fusion.channels < 1) throw ConfigError("model.fusion.channels must be >= 1");
  if (c.decoder.maneuvers < 1) throw ConfigError("model.decoder.maneuvers must be >= 1");
  if (c.decoder.future_frames < 1) throw ConfigError("model.decoder.future_frames must be >= 1");
  if (!(c.decoder.position_scale > 0) || !(c.decoder.sigma_floor > 0))
    throw ConfigError("model.decoder scale and sigma floor must be positive");
  if (c.decoder.combine != "token" && c.decoder.combine != "output")
    throw ConfigError("model.decoder.combine: token|output");
  if (c.decoder.backdoor_average != "token" && c.decoder.backdoor_average != "output")
    throw ConfigError("model.decoder.backdoor_average: token|output");
  if (c.history_frames < 1) throw ConfigError("model.history_frames must be >= 1");
  if (c.state_width < 2) throw ConfigError("model.state_width must be >= 2");
  if (c.map_width < 2) throw ConfigError("model.map_width must be >= 2");
}

void validate(const TrainConfig& t) {
  if (t.epochs < 1 || t.batch_size < 1 || t.diffusion_steps < 1)
    throw ConfigError("train epochs, batch_size and diffusion_steps must be positive");
  if (t.max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  if (!(t.learning_rate > 0)) throw ConfigError("train.learning_rate must be positive");
  if (!(t.clip_norm > 0)) throw ConfigError("train.clip_norm must be positive");
  for (const LossWeight* w : {&t.lambda_0, &t.lambda_1, &t.lambda_int, &t.lambda_traj})
    if (!std::isfinite(w->value) || w->value < 0) throw ConfigError("train loss weights must be finite and >= 0");
  if (t.lambda_0.learnable && t.lambda_0.value <= 0) throw ConfigError("learnable lambda_0 needs a positive value");
  if (t.lambda_1.learnable && t.lambda_1.value <= 0) throw ConfigError("learnable lambda_1 needs a positive value");
  if (t.lambda_int.learnable || t.lambda_traj.learnable)
    throw ConfigError("lambda_int and lambda_traj are fixed weights");
  if (t.class_weights.size() != 3) throw ConfigError("train.class_weights needs 3 entries");
  double s = 0;
  for (double w : t.class_weights) {
    if (w < 0) throw ConfigError("train.class_weights must be >= 0");
    s += w;
  }
  if (std::abs(s - 1.0) > 1e-6) throw ConfigError("train.class_weights must sum to 1");
  if (!(t.augment_probability >= 0 && t.augment_probability <= 1))
    throw ConfigError("train.augment_probability must lie in [0, 1]");
  if (t.augment_probability > 0 && t.augment_alphas.empty())
    throw ConfigError("train.augment_alphas must not be empty when augmenting");
}

void validate(const Config& c) {
  validate(c.model);
  validate(c.train);
  validate(c.generator);
  if (c.model.history_frames != c.generator.history_frames || c.model.decoder.future_frames != c.generator.future_frames)
    throw ConfigError("model history/future frames must match the generator's t_h/t_f");
}

Config config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Config c;
  {
    Reader r(j, "config");
    if (const json* m = r.child("model")) read_model(*m, c.model);
    if (const json* t = r.child("train")) read_train(*t, c.train);
    if (const json* g = r.child("generator")) read_generator(*g, c.generator);
  }
  // t_h / t_f are shared; the generator section is authoritative when only it is given.
  if (!j.contains("model") || !j["model"].contains("history_frames")) c.model.history_frames = c.generator.history_frames;
  if (!j.contains("model") || !j["model"].contains("decoder") || !j["model"]["decoder"].contains("future_frames"))
    c.model.decoder.future_frames = c.generator.future_frames;
  validate(c);
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const Config& c, int indent) { return to_json_value(c).dump(indent); }

std::uint64_t fingerprint(const Config& c) {
  const std::string s = to_json_value(c).dump();
  return fnv1a(s.data(), s.size());
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

}  // namespace causaltraj
