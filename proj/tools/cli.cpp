#include "cli.hpp"

#include "causaltraj/errors.hpp"
#include "causaltraj/metrics.hpp"
#include "causaltraj/plugin.hpp"
#include "causaltraj/scene_io.hpp"
#include "svg_plot.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

namespace causaltraj::tools {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kOutEnv = "CAUSALTRAJ_OUT";

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file (defaults are used for missing keys)");
  cmd->add_option("--out", c.out, std::string("Output directory (default: $") + kOutEnv + ", else ./causaltraj_out)");
  cmd->add_option("--seed", c.seed, "Seed overriding train.seed");
}

fs::path out_dir(const Common& c) {
  fs::path p = c.out;
  if (p.empty()) {
    const char* env = std::getenv(kOutEnv);
    p = env && *env ? fs::path(env) : fs::path("causaltraj_out");
  }
  fs::create_directories(p);
  return p;
}

Config load_cfg(const Common& c, const Config* fallback = nullptr) {
  Config cfg = !c.config.empty() ? load_config(c.config) : fallback ? *fallback : Config{};
  if (c.seed) cfg.train.seed = *c.seed;
  validate(cfg);
  return cfg;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("failed writing " + p.string());
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// "none", "noise:<alpha>" or "drop:<fraction>".
PerturbationSpec parse_perturbation(const std::string& text, std::uint64_t seed, int delta_t) {
  PerturbationSpec p;
  const auto colon = text.find(':');
  p.kind = perturbation_kind_from_string(text.substr(0, colon));
  p.seed = seed;
  p.delta_t = delta_t;
  if (p.kind != PerturbationSpec::Kind::None) {
    if (colon == std::string::npos) throw UsageError("perturbation '" + text + "' needs a value, e.g. noise:8 or drop:0.4");
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(text.substr(colon + 1), &used);
      if (used != text.size() - colon - 1) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw UsageError("bad perturbation value in '" + text + "'");
    }
    (p.kind == PerturbationSpec::Kind::Noise ? p.alpha : p.drop_fraction) = v;
  }
  validate(p);
  return p;
}

std::unique_ptr<CausalTrajModel> model_from(const Checkpoint& ck, Config* cfg_out = nullptr) {
  if (ck.stage != "full") throw UsageError("expected a full-stage checkpoint, got stage '" + ck.stage + "'");
  const Config cfg = config_from_json(ck.config_json);
  auto model = std::make_unique<CausalTrajModel>(cfg.model);
  for (const auto& name : model->params().names())
    if (!ck.weights.count(name)) throw ValidationError("weights", "checkpoint lacks " + name);
  load_weights(*model, ck);
  if (cfg_out) *cfg_out = cfg;
  return model;
}

void print_report(const std::string& title, const EvalReport& r) {
  std::cout << title << " (" << r.scenes << " scenes, " << r.perturbation.label() << ")\n";
  for (const auto& [k, v] : r.metrics) std::cout << "  " << k << " = " << v << '\n';
}

json report_json(const EvalReport& r) { return json::parse(r.to_json(-1)); }

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  Common common;
  std::optional<int> train, test;
  std::optional<double> rho;
};

void cmd_generate(const GenerateArgs& a) {
  Config cfg = load_cfg(a.common);
  if (a.train) cfg.generator.train_scenes = *a.train;
  if (a.test) cfg.generator.test_scenes = *a.test;
  if (a.rho) cfg.generator.rho = *a.rho;
  const fs::path out = out_dir(a.common);
  const GeneratedDataset d = generate_confounded_dataset(cfg.generator, cfg.train.seed);
  save_scenes_file(out / "train.jsonl", d.train);
  save_scenes_file(out / "test_iid.jsonl", d.test_iid);
  save_scenes_file(out / "test_shifted.jsonl", d.test_shifted);
  json manifest = {{"seed", cfg.train.seed},
                   {"rho", cfg.generator.rho},
                   {"splits",
                    {{"train", {{"scenes", d.train.size()}, {"cooccurrence", cooccurrence_rate(d.train)}}},
                     {"test_iid", {{"scenes", d.test_iid.size()}, {"cooccurrence", cooccurrence_rate(d.test_iid)}}},
                     {"test_shifted",
                      {{"scenes", d.test_shifted.size()}, {"cooccurrence", cooccurrence_rate(d.test_shifted)}}}}}};
  write_text(out / "dataset.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << d.train.size() << " train, " << d.test_iid.size() << " test_iid and "
            << d.test_shifted.size() << " test_shifted scenes to " << out.string() << '\n'
            << "  co-occurrence: train " << cooccurrence_rate(d.train) << ", test_shifted "
            << cooccurrence_rate(d.test_shifted) << '\n';
}

// ---------------------------------------------------------- train-diffusion

struct TrainDiffusionArgs {
  Common common;
  std::string data;
  std::optional<int> steps;
};

void cmd_train_diffusion(const TrainDiffusionArgs& a) {
  Config cfg = load_cfg(a.common);
  if (a.steps) cfg.train.diffusion_steps = *a.steps;
  validate(cfg);
  const auto scenes = load_dataset(a.data, "train");
  const fs::path out = out_dir(a.common);
  CausalTrajModel model(cfg.model, derive_seed(cfg.train.seed, 0x30de1));
  const TrainResult r = train_diffusion(model, scenes, cfg);
  save_checkpoint(r.checkpoint, (out / "diffusion.ckpt.json").string());
  write_log_csv(r.log, (out / "diffusion_log.csv").string());
  std::cout << "diffusion stage: " << r.log.size() << " steps, loss " << r.log.front().loss << " -> "
            << r.log.back().loss << "\n  checkpoint " << (out / "diffusion.ckpt.json").string() << '\n';
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string data, diffusion_ckpt, variant;
  std::optional<int> epochs;
};

void cmd_train(const TrainArgs& a) {
  std::optional<Checkpoint> diffusion;
  if (!a.diffusion_ckpt.empty()) diffusion = load_checkpoint(a.diffusion_ckpt);
  Config from_ckpt;
  if (diffusion) from_ckpt = config_from_json(diffusion->config_json);
  Config cfg = load_cfg(a.common, diffusion ? &from_ckpt : nullptr);
  if (!a.variant.empty()) cfg.model.variant = variant_from_string(a.variant);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  validate(cfg);
  const auto scenes = load_dataset(a.data, "train");
  const fs::path out = out_dir(a.common);
  CausalTrajModel model(cfg.model, derive_seed(cfg.train.seed, 0x30de1));
  const TrainResult r = train_full(model, scenes, diffusion ? &*diffusion : nullptr, cfg);
  save_checkpoint(r.checkpoint, (out / "model.ckpt.json").string());
  write_log_csv(r.log, (out / "train_log.csv").string());
  json summary = {{"variant", to_string(cfg.model.variant)},
                  {"steps", r.log.size()},
                  {"initial_loss", r.log.front().loss},
                  {"final_loss", r.log.back().loss},
                  {"lambdas", r.lambdas},
                  {"parameters", model.params().parameter_count()},
                  {"fingerprint", fingerprint_hex(fingerprint(cfg))}};
  write_text(out / "train_summary.json", summary.dump(2) + "\n");
  std::cout << "variant " << to_string(cfg.model.variant) << ": " << r.log.size() << " steps, loss "
            << r.log.front().loss << " -> " << r.log.back().loss << "\n  checkpoint "
            << (out / "model.ckpt.json").string() << '\n';
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  Common common;
  std::string ckpt, data, split = "test_shifted", metrics, perturb = "none";
  std::uint64_t perturb_seed = 0;
  int delta_t = 1;
  bool predictions = false;
};

void cmd_eval(const EvalArgs& a) {
  Config cfg;
  auto model = model_from(load_checkpoint(a.ckpt), &cfg);
  const std::uint64_t seed = a.common.seed.value_or(0);
  std::vector<MetricSpec> metrics;
  for (const auto& m : split_list(a.metrics)) metrics.push_back(metric_from_string(m, cfg.train.class_weights));
  if (metrics.empty()) metrics = default_metrics(cfg.train.class_weights);
  const PerturbationSpec p = parse_perturbation(a.perturb, a.perturb_seed, a.delta_t);
  const auto scenes = load_dataset(a.data, a.split);
  EvalReport r = evaluate(*model, scenes, metrics, p, seed);
  r.split = a.split;
  r.fingerprint = fingerprint_hex(fingerprint(cfg));
  const fs::path out = out_dir(a.common);
  const fs::path file = out / ("eval_" + a.split + "_" + p.label() + ".json");
  write_text(file, r.to_json() + "\n");
  if (a.predictions) {
    std::ofstream f(out / ("predictions_" + a.split + "_" + p.label() + ".jsonl"), std::ios::binary);
    for (const auto& s : scenes) {
      const Scene in = p.kind == PerturbationSpec::Kind::None ? s : perturb_scene(s, p);
      const auto pred = model->forward(in, nullptr, derive_seed(seed, fnv1a(s.id.data(), s.id.size()))).prediction;
      f << "{\"id\":" << json(s.id).dump() << ",\"prediction\":" << prediction_to_json(pred) << "}\n";
    }
  }
  print_report("eval " + a.split + " variant " + r.variant, r);
  std::cout << "  report " << file.string() << '\n';
}

// ------------------------------------------------------------------ ablate

struct AblateArgs {
  Common common;
  std::string variant, data, splits = "test_iid,test_shifted", metrics;
};

void cmd_ablate(const AblateArgs& a) {
  Config cfg = load_cfg(a.common);
  cfg.model.variant = variant_from_string(a.variant);
  std::vector<MetricSpec> metrics;
  for (const auto& m : split_list(a.metrics)) metrics.push_back(metric_from_string(m, cfg.train.class_weights));
  if (metrics.empty()) metrics = default_metrics(cfg.train.class_weights);
  const auto train = load_dataset(a.data, "train");
  auto model = train_model(cfg, train, cfg.train.seed);
  const VariantToggles t = model->toggles();
  json j = {{"variant", a.variant},
            {"toggles", {{"bev", t.bev}, {"progressive", t.progressive}, {"dual_scale", t.dual_scale}, {"causal", t.causal}}},
            {"effective_t_rec", model->effective_t_rec()},
            {"parameters", model->params().parameter_count()},
            {"fingerprint", fingerprint_hex(fingerprint(cfg))},
            {"reports", json::object()}};
  for (const auto& split : split_list(a.splits)) {
    EvalReport r = evaluate(*model, load_dataset(a.data, split), metrics, PerturbationSpec{}, cfg.train.seed);
    r.split = split;
    r.fingerprint = j["fingerprint"];
    print_report("ablation " + a.variant + " on " + split, r);
    j["reports"][split] = report_json(r);
  }
  const fs::path file = out_dir(a.common) / ("ablation_" + a.variant + ".json");
  write_text(file, j.dump(2) + "\n");
  std::cout << "  report " << file.string() << '\n';
}

// ----------------------------------------------------------------- xdomain

struct XdomainArgs {
  Common common;
  std::string splits, split = "train", metric = "ade";
};

void cmd_xdomain(const XdomainArgs& a) {
  const Config cfg = load_cfg(a.common);
  std::vector<DomainSplit> domains;
  for (const auto& dir : split_list(a.splits)) {
    std::string name = fs::path(dir).filename().string();
    if (name.empty()) name = fs::path(dir).parent_path().filename().string();
    domains.push_back({name, load_dataset(dir, a.split)});
  }
  const MetricSpec metric = metric_from_string(a.metric, cfg.train.class_weights);
  ModelFactory factory = [&](const std::vector<Scene>& scenes) { return train_model(cfg, scenes, cfg.train.seed); };
  const CrossDomainResult r = cross_domain_eval(factory, domains, metric);
  const fs::path file = out_dir(a.common) / "xdomain.json";
  write_text(file, r.to_json() + "\n");
  std::cout << "cross-domain " << r.metric << " (rows train, columns test)\n";
  for (Index i = 0; i < r.values.rows(); ++i) {
    std::cout << "  " << r.names[static_cast<std::size_t>(i)] << ':';
    for (Index j = 0; j < r.values.cols(); ++j) std::cout << ' ' << r.values(i, j);
    std::cout << '\n';
  }
  std::cout << "  report " << file.string() << '\n';
}

// ----------------------------------------------------------------- perturb

struct PerturbArgs {
  Common common;
  std::string data, split = "test_shifted", perturb;
  std::uint64_t perturb_seed = 0;
  int delta_t = 1;
};

void cmd_perturb(const PerturbArgs& a) {
  const PerturbationSpec p = parse_perturbation(a.perturb, a.perturb_seed, a.delta_t);
  std::vector<Scene> scenes = load_dataset(a.data, a.split);
  for (auto& s : scenes) s = perturb_scene(s, p);
  const fs::path file = out_dir(a.common) / (a.split + "_" + p.label() + ".jsonl");
  save_scenes_file(file, scenes);
  std::cout << "perturbed " << scenes.size() << " scenes (" << p.label() << ") -> " << file.string() << '\n';
}

// --------------------------------------------------------------- wrap-eval

struct WrapEvalArgs {
  Common common;
  std::string data, diffusion_ckpt, splits = "test_iid,test_shifted", combine = "auto", metrics;
  int n = 0;
  std::optional<int> epochs;
};

CombineSpace combine_space(const std::string& s) {
  if (s == "auto") return CombineSpace::Auto;
  if (s == "context") return CombineSpace::Context;
  if (s == "output") return CombineSpace::Output;
  throw UsageError("--combine must be auto, context or output");
}

void cmd_wrap_eval(const WrapEvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.diffusion_ckpt);
  const Config from_ckpt = config_from_json(ck.config_json);
  Config cfg = load_cfg(a.common, &from_ckpt);
  if (a.epochs) cfg.train.epochs = *a.epochs;
  const int n = a.n > 0 ? a.n : cfg.model.diffusion.samples;
  const CombineSpace space = combine_space(a.combine);
  std::vector<MetricSpec> metrics;
  for (const auto& m : split_list(a.metrics)) metrics.push_back(metric_from_string(m, cfg.train.class_weights));
  if (metrics.empty()) metrics = default_metrics(cfg.train.class_weights);
  const DiffusionBundle bundle(ck);
  const auto train = load_dataset(a.data, "train");
  const double dt = train.front().dt;
  const std::uint64_t seed = cfg.train.seed;
  json j = {{"n", n}, {"combine", a.combine}, {"epochs", cfg.train.epochs}, {"seed", seed}};
  for (int wrapped = 0; wrapped < 2; ++wrapped) {
    nn::ParamStore store(derive_seed(seed, 0xba5e11e));
    ReferenceBaseline base(store, cfg.model, dt);
    store.load_values(ck.weights, "spatial");
    const CausalWrapped w = wrap(base, bundle, n, space);
    std::vector<Tensor> params = store.in_group("baseline");
    std::map<std::string, BackdoorSet> sets;
    if (wrapped) {
      for (std::size_t i = 0; i < train.size(); ++i) sets[train[i].id] = w.sample(train[i], derive_seed(seed, 0xbd00 + i));
    } else {
      for (const auto& p : store.in_group("spatial")) params.push_back(p);
    }
    TrainForward fwd = [&](const Scene& s, std::uint64_t) {
      return wrapped ? w.forward(s, sets.at(s.id)).prediction : base.predict(s);
    };
    const auto log = train_predictor(fwd, params, train, cfg.train);
    PredictFn predict = [&](const Scene& s, std::uint64_t sd) { return wrapped ? w.predict(s, sd) : base.predict(s); };
    const char* name = wrapped ? "wrapped" : "baseline";
    j[name] = {{"initial_loss", log.front().loss}, {"final_loss", log.back().loss}, {"reports", json::object()}};
    for (const auto& split : split_list(a.splits)) {
      EvalReport r = evaluate(predict, cfg.model.history_frames, cfg.model.decoder.future_frames,
                              load_dataset(a.data, split), metrics, PerturbationSpec{}, seed);
      r.split = split;
      r.variant = name;
      print_report(std::string(name) + " on " + split, r);
      j[name]["reports"][split] = report_json(r);
    }
  }
  const fs::path file = out_dir(a.common) / "wrap_eval.json";
  write_text(file, j.dump(2) + "\n");
  std::cout << "  report " << file.string() << '\n';
}

// -------------------------------------------------------------------- plot

struct PlotArgs {
  Common common;
  std::vector<std::string> ckpts;
  std::string data, split = "test_shifted";
  int count = 4;
};

void cmd_plot(const PlotArgs& a) {
  static const char* colors[] = {"#d62728", "#1f77b4", "#ff7f0e", "#17becf"};
  if (a.count < 1) throw ValidationError("count", "must be >= 1");
  std::vector<std::unique_ptr<CausalTrajModel>> models;
  for (const auto& c : a.ckpts) models.push_back(model_from(load_checkpoint(c)));
  const auto scenes = load_dataset(a.data, a.split);
  const fs::path dir = out_dir(a.common) / "plots";
  fs::create_directories(dir);
  const std::uint64_t seed = a.common.seed.value_or(0);
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(a.count), scenes.size());
  for (std::size_t i = 0; i < n; ++i) {
    const Scene& s = scenes[i];
    std::vector<PlotLayer> layers;
    for (std::size_t m = 0; m < models.size(); ++m) {
      ag::NoGradGuard ng;
      layers.push_back({std::string("variant ") + to_string(models[m]->config().variant) + " (" +
                            fs::path(a.ckpts[m]).filename().string() + ")",
                        colors[m % 4], models[m]->forward(s, nullptr, derive_seed(seed, fnv1a(s.id.data(), s.id.size()))).prediction});
    }
    write_text(dir / (s.id + ".svg"), render_scene_svg(s, layers));
  }
  std::cout << "wrote " << n << " figures to " << dir.string() << '\n';
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Causal trajectory prediction: data generation, two-stage training, evaluation and plotting"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write the synthetic confounded benchmark (train, test_iid, test_shifted)");
  add_common(g, gen.common);
  g->add_option("--train-scenes", gen.train, "Training scene count");
  g->add_option("--test-scenes", gen.test, "Scene count of each test split");
  g->add_option("--rho", gen.rho, "Co-occurrence rate of the spurious cue")->check(CLI::Range(0.0, 1.0));
  g->callback([&] { cmd_generate(gen); });

  TrainDiffusionArgs td;
  auto* d = app.add_subcommand("train-diffusion", "Stage 1: fit the diffusion model on spatial tokens");
  add_common(d, td.common);
  d->add_option("--data", td.data, "Dataset directory or .jsonl file")->required();
  d->add_option("--steps", td.steps, "Override train.diffusion_steps");
  d->callback([&] { cmd_train_diffusion(td); });

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Stage 2: train the full model with the diffusion weights frozen");
  add_common(t, tr.common);
  t->add_option("--data", tr.data, "Dataset directory or .jsonl file")->required();
  t->add_option("--diffusion-ckpt", tr.diffusion_ckpt, "Stage-1 checkpoint (required unless --variant D)");
  t->add_option("--variant", tr.variant, "Ablation variant A..E")->check(CLI::IsMember({"A", "B", "C", "D", "E"}));
  t->add_option("--epochs", tr.epochs, "Override train.epochs");
  t->callback([&] { cmd_train(tr); });

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Evaluate a full checkpoint, optionally under a perturbation");
  add_common(e, ev.common);
  e->add_option("--ckpt", ev.ckpt, "Full-stage checkpoint")->required();
  e->add_option("--data", ev.data, "Dataset directory or .jsonl file")->required();
  e->add_option("--split", ev.split, "Split to evaluate")->capture_default_str();
  e->add_option("--metrics", ev.metrics, "Comma list of ade, fde, min_ade_<k>, rmse, wsade, wsfde");
  e->add_option("--perturb", ev.perturb, "none | noise:<alpha> | drop:<fraction>")->capture_default_str();
  e->add_option("--perturb-seed", ev.perturb_seed, "Perturbation seed")->capture_default_str();
  e->add_option("--delta-t", ev.delta_t, "Frame gap of the curvature term")->capture_default_str();
  e->add_flag("--predictions", ev.predictions, "Also write per-scene predictions as JSON lines");
  e->callback([&] { cmd_eval(ev); });

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Train one ablation variant and evaluate it");
  add_common(a, ab.common);
  a->add_option("--variant", ab.variant, "Variant A..E")->required()->check(CLI::IsMember({"A", "B", "C", "D", "E"}));
  a->add_option("--data", ab.data, "Dataset directory")->required();
  a->add_option("--splits", ab.splits, "Comma list of evaluation splits")->capture_default_str();
  a->add_option("--metrics", ab.metrics, "Comma list of metrics");
  a->callback([&] { cmd_ablate(ab); });

  XdomainArgs xd;
  auto* x = app.add_subcommand("xdomain", "Train on each domain, evaluate on every domain, KS-test target speeds");
  add_common(x, xd.common);
  x->add_option("--splits", xd.splits, "Comma list of domain dataset directories")->required();
  x->add_option("--split", xd.split, "Split name read from each directory")->capture_default_str();
  x->add_option("--metric", xd.metric, "Metric label")->capture_default_str();
  x->callback([&] { cmd_xdomain(xd); });

  PerturbArgs pa;
  auto* p = app.add_subcommand("perturb", "Write a perturbed copy of a split");
  add_common(p, pa.common);
  p->add_option("--data", pa.data, "Dataset directory or .jsonl file")->required();
  p->add_option("--split", pa.split, "Split to perturb")->capture_default_str();
  p->add_option("--perturb", pa.perturb, "noise:<alpha> | drop:<fraction>")->required();
  p->add_option("--perturb-seed", pa.perturb_seed, "Perturbation seed")->capture_default_str();
  p->add_option("--delta-t", pa.delta_t, "Frame gap of the curvature term")->capture_default_str();
  p->callback([&] { cmd_perturb(pa); });

  WrapEvalArgs we;
  auto* w = app.add_subcommand("wrap-eval", "Train the reference baseline raw and causally wrapped, evaluate both");
  add_common(w, we.common);
  w->add_option("--data", we.data, "Dataset directory")->required();
  w->add_option("--diffusion-ckpt", we.diffusion_ckpt, "Stage-1 checkpoint supplying the backdoor sampler")->required();
  w->add_option("--n", we.n, "Backdoor samples (default model.diffusion.samples)");
  w->add_option("--combine", we.combine, "auto | context | output")->capture_default_str();
  w->add_option("--splits", we.splits, "Comma list of evaluation splits")->capture_default_str();
  w->add_option("--metrics", we.metrics, "Comma list of metrics");
  w->add_option("--epochs", we.epochs, "Override train.epochs");
  w->callback([&] { cmd_wrap_eval(we); });

  PlotArgs pl;
  auto* f = app.add_subcommand("plot", "Write SVG overlays of predicted modes for the first scenes of a split");
  add_common(f, pl.common);
  f->add_option("--ckpt", pl.ckpts, "Full-stage checkpoint (repeat to overlay models)")->required();
  f->add_option("--data", pl.data, "Dataset directory or .jsonl file")->required();
  f->add_option("--split", pl.split, "Split to plot")->capture_default_str();
  f->add_option("--count", pl.count, "Number of scenes")->capture_default_str();
  f->callback([&] { cmd_plot(pl); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& err) {
    std::cerr << "error: " << err.what() << "\n\n" << app.help();
    return 2;
  } catch (const UsageError& err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return 2;
  } catch (const ValidationError& err) {
    std::cerr << "invalid " << err.field() << ": " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace causaltraj::tools
