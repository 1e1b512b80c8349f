#pragma once

// Displacement metrics, the evaluation harness with optional input
// perturbation, cross-domain evaluation with a two-sample KS test, and the
// ablation runner.

#include "causaltraj/perturb.hpp"
#include "causaltraj/training.hpp"

#include <functional>
#include <map>
#include <memory>

namespace causaltraj {

/// Mean / final Euclidean displacement between two t x 2 tracks. DomainError
/// on length mismatch or empty input.
double ade(const Matrix& pred, const Matrix& gt);
double fde(const Matrix& pred, const Matrix& gt);

/// Smallest ADE among the k most probable modes (ties keep the lower index).
double min_ade_k(const std::vector<Matrix>& modes, const Eigen::VectorXd& probs, const Matrix& gt, int k);
double min_fde_k(const std::vector<Matrix>& modes, const Eigen::VectorXd& probs, const Matrix& gt, int k);

/// sqrt(mean over scenes of squared displacement at frame h) for each
/// 1-based frame h in `horizons`.
std::vector<double> rmse_by_horizon(const std::vector<Matrix>& preds, const std::vector<Matrix>& gts,
                                    const std::vector<int>& horizons);

/// sum_c w_c * per_class[c]; weights are (vehicle, pedestrian, bicycle),
/// nonnegative and summing to 1.
double weighted_sum(const std::map<AgentClass, double>& per_class, const std::vector<double>& weights);
inline double wsade(const std::map<AgentClass, double>& per_class_ade, const std::vector<double>& w) {
  return weighted_sum(per_class_ade, w);
}
inline double wsfde(const std::map<AgentClass, double>& per_class_fde, const std::vector<double>& w) {
  return weighted_sum(per_class_fde, w);
}

struct MetricSpec {
  enum class Name { Ade, Fde, MinAdeK, Rmse, Wsade, Wsfde };
  Name name = Name::Ade;
  int k = 1;
  std::vector<double> class_weights;
  /// "ade", "fde", "min_ade_5", "rmse", "wsade", "wsfde".
  std::string label() const;
};

/// Parses a label as produced by MetricSpec::label(). UsageError otherwise.
MetricSpec metric_from_string(const std::string& s, const std::vector<double>& class_weights = {0.2, 0.58, 0.22});
std::vector<MetricSpec> default_metrics(const std::vector<double>& class_weights = {0.2, 0.58, 0.22});

struct EvalReport {
  std::map<std::string, double> metrics;
  std::vector<double> horizons_s;    // 1..5 s where within t_f
  std::vector<double> rmse_horizon;  // per entry of horizons_s
  std::size_t scenes = 0;
  PerturbationSpec perturbation;
  std::string split;
  std::string fingerprint;
  std::string variant;

  std::string to_json(int indent = 2) const;
};

/// Perturbs each scene's inputs (futures stay intact), predicts with a
/// backdoor seed derived from (seed, scene id) and aggregates. Deterministic
/// and independent of scene order. ConfigError when scene shapes do not match
/// the model.
EvalReport evaluate(const CausalTrajModel& model, const std::vector<Scene>& scenes,
                    const std::vector<MetricSpec>& metrics, const PerturbationSpec& perturbation,
                    std::uint64_t seed = 0);

/// Any predictor: (possibly perturbed scene, per-scene seed) -> mixture.
using PredictFn = std::function<MixturePrediction(const Scene&, std::uint64_t)>;
/// Same harness for an arbitrary predictor; `t_h`/`t_f` are the shapes it expects.
EvalReport evaluate(const PredictFn& predict, int t_h, int t_f, const std::vector<Scene>& scenes,
                    const std::vector<MetricSpec>& metrics, const PerturbationSpec& perturbation,
                    std::uint64_t seed = 0);

struct KsResult {
  double statistic = 0;
  double p_value = 1;
};
/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
KsResult ks_test(std::vector<double> a, std::vector<double> b);
/// Current speed of each scene's target, m/s.
std::vector<double> target_speeds(const std::vector<Scene>& scenes);

struct DomainSplit {
  std::string name;
  std::vector<Scene> scenes;
};

struct CrossDomainResult {
  std::vector<std::string> names;
  std::string metric;
  Matrix values;    // train domain x test domain
  Matrix ks_p;      // pairwise KS p-values on target speeds
  Matrix ks_stat;
  std::string to_json(int indent = 2) const;
};

/// Builds a trained model from the scenes of one domain.
using ModelFactory = std::function<std::unique_ptr<CausalTrajModel>(const std::vector<Scene>&)>;

/// Trains once per split and evaluates on every split. ConfigError with
/// fewer than two splits or a split with fewer than two scenes.
CrossDomainResult cross_domain_eval(const ModelFactory& factory, const std::vector<DomainSplit>& splits,
                                    const MetricSpec& metric);

/// Stage 1 (when the variant uses diffusion) then stage 2 on `train`.
std::unique_ptr<CausalTrajModel> train_model(const Config& cfg, const std::vector<Scene>& train,
                                             std::uint64_t seed);

/// Trains the given variant on `train` and evaluates it on `test`.
EvalReport run_ablation(Variant variant, const std::vector<Scene>& train, const std::vector<Scene>& test,
                        Config cfg, const std::vector<MetricSpec>& metrics);

}  // namespace causaltraj
