#include "causaltraj/metrics.hpp"

#include "causaltraj/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace causaltraj {

namespace {

void check_pair(const Matrix& pred, const Matrix& gt) {
  if (pred.rows() == 0 || pred.rows() != gt.rows()) throw DomainError("prediction and ground truth lengths differ");
  if (pred.cols() < 2 || gt.cols() < 2) throw DomainError("tracks need x and y columns");
}

std::vector<int> top_k(const Eigen::VectorXd& probs, int k) {
  std::vector<int> idx(static_cast<std::size_t>(probs.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return probs(a) > probs(b); });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace

double ade(const Matrix& pred, const Matrix& gt) {
  check_pair(pred, gt);
  return (pred.leftCols(2) - gt.leftCols(2)).rowwise().norm().mean();
}

double fde(const Matrix& pred, const Matrix& gt) {
  check_pair(pred, gt);
  return (pred.bottomRows(1).leftCols(2) - gt.bottomRows(1).leftCols(2)).norm();
}

double min_ade_k(const std::vector<Matrix>& modes, const Eigen::VectorXd& probs, const Matrix& gt, int k) {
  if (k < 1) throw DomainError("min_ade_k: k must be >= 1");
  if (k > static_cast<int>(modes.size())) throw DomainError("min_ade_k: k exceeds the mode count");
  if (probs.size() != static_cast<Index>(modes.size())) throw DomainError("min_ade_k: one probability per mode");
  double best = std::numeric_limits<double>::infinity();
  for (int m : top_k(probs, k)) best = std::min(best, ade(modes[static_cast<std::size_t>(m)], gt));
  return best;
}

double min_fde_k(const std::vector<Matrix>& modes, const Eigen::VectorXd& probs, const Matrix& gt, int k) {
  if (k < 1 || k > static_cast<int>(modes.size())) throw DomainError("min_fde_k: k out of range");
  if (probs.size() != static_cast<Index>(modes.size())) throw DomainError("min_fde_k: one probability per mode");
  double best = std::numeric_limits<double>::infinity();
  for (int m : top_k(probs, k)) best = std::min(best, fde(modes[static_cast<std::size_t>(m)], gt));
  return best;
}

std::vector<double> rmse_by_horizon(const std::vector<Matrix>& preds, const std::vector<Matrix>& gts,
                                    const std::vector<int>& horizons) {
  if (preds.size() != gts.size() || preds.empty()) throw DomainError("rmse: need matching, non-empty sets");
  std::vector<double> out;
  for (int h : horizons) {
    double sq = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      check_pair(preds[i], gts[i]);
      if (h < 1 || h > preds[i].rows()) throw DomainError("rmse: horizon " + std::to_string(h) + " beyond t_f");
      sq += (preds[i].row(h - 1).head(2) - gts[i].row(h - 1).head(2)).squaredNorm();
    }
    out.push_back(std::sqrt(sq / static_cast<double>(preds.size())));
  }
  return out;
}

double weighted_sum(const std::map<AgentClass, double>& per_class, const std::vector<double>& w) {
  if (w.size() != 3) throw DomainError("class weights must cover vehicle, pedestrian, bicycle");
  double total = 0;
  for (double x : w)
    if (!(x >= 0)) throw DomainError("class weights must be nonnegative");
  if (std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) > 1e-9) throw DomainError("class weights must sum to 1");
  for (int c = 0; c < 3; ++c) {
    if (w[static_cast<std::size_t>(c)] == 0) continue;
    auto it = per_class.find(static_cast<AgentClass>(c));
    if (it == per_class.end()) throw DomainError("no value for a class with nonzero weight");
    total += w[static_cast<std::size_t>(c)] * it->second;
  }
  return total;
}

std::string MetricSpec::label() const {
  switch (name) {
    case Name::Ade: return "ade";
    case Name::Fde: return "fde";
    case Name::MinAdeK: return "min_ade_" + std::to_string(k);
    case Name::Rmse: return "rmse";
    case Name::Wsade: return "wsade";
    case Name::Wsfde: return "wsfde";
  }
  return "ade";
}

MetricSpec metric_from_string(const std::string& s, const std::vector<double>& w) {
  MetricSpec m;
  m.class_weights = w;
  if (s == "ade") m.name = MetricSpec::Name::Ade;
  else if (s == "fde") m.name = MetricSpec::Name::Fde;
  else if (s == "rmse") m.name = MetricSpec::Name::Rmse;
  else if (s == "wsade") m.name = MetricSpec::Name::Wsade;
  else if (s == "wsfde") m.name = MetricSpec::Name::Wsfde;
  else if (s.rfind("min_ade_", 0) == 0) {
    m.name = MetricSpec::Name::MinAdeK;
    try {
      std::size_t used = 0;
      m.k = std::stoi(s.substr(8), &used);
      if (used != s.size() - 8 || m.k < 1) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw UsageError("bad metric '" + s + "'");
    }
  } else {
    throw UsageError("unknown metric '" + s + "' (ade, fde, min_ade_<k>, rmse, wsade, wsfde)");
  }
  return m;
}

std::vector<MetricSpec> default_metrics(const std::vector<double>& w) {
  std::vector<MetricSpec> out;
  for (const char* s : {"ade", "fde", "min_ade_1", "min_ade_3", "rmse"}) out.push_back(metric_from_string(s, w));
  return out;
}

std::string EvalReport::to_json(int indent) const {
  nlohmann::json j;
  j["metrics"] = metrics;
  j["rmse_by_horizon"] = nlohmann::json::array();
  for (std::size_t i = 0; i < horizons_s.size(); ++i)
    j["rmse_by_horizon"].push_back({{"horizon_s", horizons_s[i]}, {"rmse", rmse_horizon[i]}});
  j["scenes"] = scenes;
  j["perturbation"] = {{"kind", perturbation.label()},
                       {"alpha", perturbation.alpha},
                       {"drop_fraction", perturbation.drop_fraction},
                       {"delta_t", perturbation.delta_t},
                       {"seed", perturbation.seed}};
  j["split"] = split;
  j["fingerprint"] = fingerprint;
  j["variant"] = variant;
  return j.dump(indent);
}

EvalReport evaluate(const CausalTrajModel& model, const std::vector<Scene>& scenes,
                    const std::vector<MetricSpec>& metrics, const PerturbationSpec& perturbation,
                    std::uint64_t seed) {
  const ModelConfig& mc = model.config();
  PredictFn fn = [&model](const Scene& s, std::uint64_t sd) { return model.forward(s, nullptr, sd).prediction; };
  EvalReport rep = evaluate(fn, mc.history_frames, mc.decoder.future_frames, scenes, metrics, perturbation, seed);
  rep.variant = to_string(mc.variant);
  return rep;
}

EvalReport evaluate(const PredictFn& predict, int t_h, int t_f, const std::vector<Scene>& scenes,
                    const std::vector<MetricSpec>& metrics, const PerturbationSpec& perturbation,
                    std::uint64_t seed) {
  validate(perturbation);
  struct PerScene {
    std::string id;
    AgentClass cls;
    Matrix best;  // most probable mode means
    Matrix gt;
    std::vector<Matrix> modes;
    Eigen::VectorXd probs;
  };
  std::vector<PerScene> rows;
  ag::NoGradGuard ng;
  for (const Scene& s : scenes) {
    if (s.future_frames != t_f || s.history_frames != t_h)
      throw ConfigError("scene " + s.id + " has t_h/t_f " + std::to_string(s.history_frames) + "/" +
                        std::to_string(s.future_frames) + " but the model expects " + std::to_string(t_h) + "/" +
                        std::to_string(t_f));
    const Scene input = perturbation.kind == PerturbationSpec::Kind::None ? s : perturb_scene(s, perturbation);
    const std::uint64_t scene_seed = derive_seed(seed, fnv1a(s.id.data(), s.id.size()));
    const MixturePrediction p = predict(input, scene_seed);
    PerScene r{s.id, s.target.agent_class, {}, s.target_future(), {}, p.probabilities()};
    for (int k = 0; k < p.maneuvers(); ++k) r.modes.push_back(p.means(k));
    Index arg = 0;
    r.probs.maxCoeff(&arg);
    r.best = r.modes[static_cast<std::size_t>(arg)];
    rows.push_back(std::move(r));
  }
  // Canonical order keeps the floating-point sums independent of input order.
  std::stable_sort(rows.begin(), rows.end(), [](const PerScene& a, const PerScene& b) { return a.id < b.id; });

  EvalReport rep;
  rep.scenes = rows.size();
  rep.perturbation = perturbation;
  if (rows.empty()) return rep;
  const double n = static_cast<double>(rows.size());
  std::vector<Matrix> preds, gts;
  for (const auto& r : rows) {
    preds.push_back(r.best);
    gts.push_back(r.gt);
  }
  for (const auto& m : metrics) {
    double v = 0;
    switch (m.name) {
      case MetricSpec::Name::Ade:
        for (const auto& r : rows) v += ade(r.best, r.gt);
        v /= n;
        break;
      case MetricSpec::Name::Fde:
        for (const auto& r : rows) v += fde(r.best, r.gt);
        v /= n;
        break;
      case MetricSpec::Name::MinAdeK:
        for (const auto& r : rows) v += min_ade_k(r.modes, r.probs, r.gt, m.k);
        v /= n;
        break;
      case MetricSpec::Name::Rmse: {
        double sq = 0;
        for (const auto& r : rows) sq += (r.best - r.gt.leftCols(2)).rowwise().squaredNorm().mean();
        v = std::sqrt(sq / n);
        break;
      }
      case MetricSpec::Name::Wsade:
      case MetricSpec::Name::Wsfde: {
        std::map<AgentClass, double> sum, count;
        for (const auto& r : rows) {
          sum[r.cls] += m.name == MetricSpec::Name::Wsade ? ade(r.best, r.gt) : fde(r.best, r.gt);
          count[r.cls] += 1;
        }
        for (auto& [c, s] : sum) s /= count[c];
        v = weighted_sum(sum, m.class_weights);
        break;
      }
    }
    rep.metrics[m.label()] = v;
  }
  const double dt = scenes.front().dt;
  std::vector<int> frames;
  for (int h = 1; h <= 5; ++h) {
    const int f = static_cast<int>(std::lround(h / dt));
    if (f >= 1 && f <= t_f) {
      frames.push_back(f);
      rep.horizons_s.push_back(h);
    }
  }
  if (!frames.empty()) rep.rmse_horizon = rmse_by_horizon(preds, gts, frames);
  return rep;
}

KsResult ks_test(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("KS test needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsResult r;
  r.statistic = d;
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  // Q_KS(lambda) = 2 sum_k (-1)^{k-1} exp(-2 k^2 lambda^2)
  if (lambda < 1e-3) {
    r.p_value = 1.0;
  } else {
    double q = 0, sign = 1;
    for (int k = 1; k <= 200; ++k) {
      const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
      q += term;
      if (std::abs(term) < 1e-12) break;
      sign = -sign;
    }
    r.p_value = std::clamp(2.0 * q, 0.0, 1.0);
  }
  return r;
}

std::vector<double> target_speeds(const std::vector<Scene>& scenes) {
  std::vector<double> out;
  for (const auto& s : scenes) {
    const Index h = s.target.history_length;
    if (h < 2) throw DomainError("speed needs at least two history frames");
    const Matrix& p = s.target.trajectory.points;
    out.push_back((p.row(h - 1) - p.row(h - 2)).norm() / s.dt);
  }
  return out;
}

std::string CrossDomainResult::to_json(int indent) const {
  auto rows = [](const Matrix& m) {
    nlohmann::json a = nlohmann::json::array();
    for (Index i = 0; i < m.rows(); ++i) {
      std::vector<double> r(static_cast<std::size_t>(m.cols()));
      for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
      a.push_back(r);
    }
    return a;
  };
  nlohmann::json j = {{"domains", names}, {"metric", metric}, {"values", rows(values)},
                      {"ks_p_value", rows(ks_p)}, {"ks_statistic", rows(ks_stat)}};
  return j.dump(indent);
}

CrossDomainResult cross_domain_eval(const ModelFactory& factory, const std::vector<DomainSplit>& splits,
                                    const MetricSpec& metric) {
  if (splits.size() < 2) throw ConfigError("cross-domain evaluation needs at least two splits");
  for (const auto& s : splits)
    if (s.scenes.size() < 2) throw ConfigError("split '" + s.name + "' has fewer than two scenes");
  const Index n = static_cast<Index>(splits.size());
  CrossDomainResult r;
  r.metric = metric.label();
  r.values = Matrix::Zero(n, n);
  r.ks_p = Matrix::Ones(n, n);
  r.ks_stat = Matrix::Zero(n, n);
  for (const auto& s : splits) r.names.push_back(s.name);
  for (Index i = 0; i < n; ++i) {
    auto model = factory(splits[static_cast<std::size_t>(i)].scenes);
    for (Index j = 0; j < n; ++j) {
      PerturbationSpec none;
      r.values(i, j) = evaluate(*model, splits[static_cast<std::size_t>(j)].scenes, {metric}, none).metrics.at(r.metric);
      const KsResult ks = ks_test(target_speeds(splits[static_cast<std::size_t>(i)].scenes),
                                  target_speeds(splits[static_cast<std::size_t>(j)].scenes));
      r.ks_p(i, j) = ks.p_value;
      r.ks_stat(i, j) = ks.statistic;
    }
  }
  return r;
}

std::unique_ptr<CausalTrajModel> train_model(const Config& cfg, const std::vector<Scene>& train, std::uint64_t seed) {
  Config c = cfg;
  c.train.seed = seed;
  auto model = std::make_unique<CausalTrajModel>(c.model, derive_seed(seed, 0x30de1));
  Checkpoint diffusion;
  if (model->toggles().causal) diffusion = train_diffusion(*model, train, c).checkpoint;
  train_full(*model, train, model->toggles().causal ? &diffusion : nullptr, c);
  return model;
}

EvalReport run_ablation(Variant variant, const std::vector<Scene>& train, const std::vector<Scene>& test, Config cfg,
                        const std::vector<MetricSpec>& metrics) {
  cfg.model.variant = variant;
  auto model = train_model(cfg, train, cfg.train.seed);
  EvalReport rep = evaluate(*model, test, metrics, PerturbationSpec{}, cfg.train.seed);
  rep.fingerprint = fingerprint_hex(fingerprint(cfg));
  return rep;
}

}  // namespace causaltraj
