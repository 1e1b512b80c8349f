#include "doctest.h"

#include "causaltraj/errors.hpp"
#include "causaltraj/model.hpp"
#include "fixtures.hpp"

#include <filesystem>

using namespace causaltraj;

namespace {

Scene with_history(const Scene& s, Rng& rng) {
  Scene out = s;
  const Index h = s.target.history_length;
  out.target.trajectory.points.topRows(h) += standard_normal(h, 2, rng) * 2.0;
  return out;
}

bool same(const Tensor& a, const Tensor& b) { return a.value() == b.value(); }

}  // namespace

TEST_CASE("counterfactual branch is blind to the target history") {
  const Config cfg = testing::tiny_config();
  CausalTrajModel model(cfg.model, 3);
  const auto scenes = testing::tiny_scenes(cfg, 5);
  Rng rng(11);
  int checked = 0;
  for (const Scene& base : scenes) {
    const BackdoorSet set = model.sample_backdoor(base, 5);
    const ModelOutput ref = model.forward(base, &set);
    for (int v = 0; v < 10; ++v) {
      const ModelOutput o = model.forward(with_history(base, rng), &set);
      CHECK(same(o.counterfactual.values, ref.counterfactual.values));
      CHECK(same(o.g_c, ref.g_c));
      for (std::size_t i = 0; i < o.counterfactual_queries.size(); ++i)
        CHECK(same(o.counterfactual_queries[i].values, ref.counterfactual_queries[i].values));
      CHECK_FALSE(same(o.factual.values, ref.factual.values));
      ++checked;
    }
  }
  CHECK(checked == 50);
}

TEST_CASE("zero-history scenes have identical factual and counterfactual branches") {
  const Config cfg = testing::tiny_config();
  CausalTrajModel model(cfg.model, 4);
  Scene s = testing::tiny_scenes(cfg, 1)[0];
  s.target = zero_history(s.target);
  const BackdoorSet set = model.sample_backdoor(s, 1);
  const ModelOutput o = model.forward(s, &set);
  for (std::size_t i = 0; i < o.contexts.size(); ++i)
    CHECK(same(o.contexts[i].value, o.counterfactual_contexts[i].value));
  CHECK(same(o.g, o.g_c));
  CHECK(o.decoder_input.value().isZero(0));
}

TEST_CASE("counterfactual context follows the map") {
  const Config cfg = testing::tiny_config();
  CausalTrajModel model(cfg.model, 5);
  const Scene s = testing::tiny_scenes(cfg, 1)[0];
  Scene moved = s;
  moved.map[1].points.col(1).array() += 1.5;
  const ModelOutput a = model.forward(s, nullptr, 9);
  const ModelOutput b = model.forward(moved, nullptr, 9);
  CHECK((a.counterfactual_contexts[0].value.value() - b.counterfactual_contexts[0].value.value()).norm() > 0);
}

TEST_CASE("decoder input is the exact mean of the per-sample tokens") {
  Config cfg = testing::tiny_config();
  cfg.model.diffusion.samples = 5;
  CausalTrajModel model(cfg.model, 6);
  const Scene s = testing::tiny_scenes(cfg, 1)[0];
  const BackdoorSet set = model.sample_backdoor(s, 2);
  const ModelOutput o = model.forward(s, &set);
  REQUIRE(o.factual_samples.size() == 5);

  // Reference: canonical order, plain left-to-right sum, one scaling.
  auto reference = [](const std::vector<CompositeToken>& toks) {
    std::vector<Matrix> vals;
    for (const auto& t : toks) vals.push_back(t.values.value());
    std::sort(vals.begin(), vals.end(), [](const Matrix& a, const Matrix& b) {
      return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
    });
    Matrix acc = vals[0];
    for (std::size_t i = 1; i < vals.size(); ++i) acc = acc + vals[i];
    return Matrix(acc * (1.0 / static_cast<double>(vals.size())));
  };
  const Matrix f = reference(o.factual_samples), c = reference(o.counterfactual_samples);
  CHECK(o.factual.values.value() == f);
  CHECK(o.counterfactual.values.value() == c);
  CHECK(o.decoder_input.value() == f - c);

  // Against the mean in extended precision, the result is within rounding.
  Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic> exact =
      Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>::Zero(f.rows(), f.cols());
  for (const auto& t : o.factual_samples) exact += t.values.value().cast<long double>();
  exact /= 5.0L;
  CHECK((exact - f.cast<long double>()).cwiseAbs().maxCoeff() < 1e-14L);
}

TEST_CASE("permuting the backdoor set leaves every output unchanged") {
  Config cfg = testing::tiny_config();
  cfg.model.diffusion.samples = 4;
  for (const char* average : {"token", "output"})
    for (const char* combine : {"token", "output"}) {
      cfg.model.decoder.backdoor_average = average;
      cfg.model.decoder.combine = combine;
      CausalTrajModel model(cfg.model, 7);
      const Scene s = testing::tiny_scenes(cfg, 1)[0];
      const BackdoorSet set = model.sample_backdoor(s, 3);
      BackdoorSet rev;
      rev.samples.assign(set.samples.rbegin(), set.samples.rend());
      const ModelOutput a = model.forward(s, &set), b = model.forward(s, &rev);
      CHECK(same(a.prediction.probs, b.prediction.probs));
      CHECK(same(a.prediction.mu_x, b.prediction.mu_x));
      CHECK(same(a.prediction.mu_y, b.prediction.mu_y));
      CHECK(same(a.prediction.sigma_x, b.prediction.sigma_x));
      CHECK(same(a.prediction.rho, b.prediction.rho));
      CHECK(same(a.factual.values, b.factual.values));
      CHECK_NOTHROW(check_invariants(a.prediction));
    }
}

TEST_CASE("fresh backdoor draws are seeded") {
  const Config cfg = testing::tiny_config();
  CausalTrajModel model(cfg.model, 8);
  const Scene s = testing::tiny_scenes(cfg, 1)[0];
  CHECK(same(model.forward(s, nullptr, 4).prediction.mu_x, model.forward(s, nullptr, 4).prediction.mu_x));
  CHECK_FALSE(same(model.forward(s, nullptr, 4).prediction.mu_x, model.forward(s, nullptr, 5).prediction.mu_x));
  BackdoorSet empty;
  CHECK_THROWS_AS(model.forward(s, &empty), DomainError);
}

TEST_CASE("variants switch their components") {
  const Config base = testing::tiny_config();
  const Scene s = testing::tiny_scenes(base, 1)[0];
  auto has_group = [](const CausalTrajModel& m, const std::string& g) { return !m.params().in_group(g).empty(); };

  CausalTrajModel e(testing::tiny_config(Variant::E).model, 1);
  CHECK(e.toggles().bev);
  CHECK(e.toggles().progressive);
  CHECK(e.toggles().dual_scale);
  CHECK(e.toggles().causal);
  CHECK(e.effective_t_rec() == 2);
  CHECK(has_group(e, "diffusion"));

  CausalTrajModel a(testing::tiny_config(Variant::A).model, 1);
  CHECK_FALSE(has_group(a, "bev"));
  CHECK(a.forward(s, nullptr, 1).contexts[0].views.value().row(2).isZero(0));

  CausalTrajModel b(testing::tiny_config(Variant::B).model, 1);
  CHECK(b.effective_t_rec() == 1);
  CHECK(b.forward(s, nullptr, 1).queries[0].stage == 1);

  CausalTrajModel c(testing::tiny_config(Variant::C).model, 1);
  CHECK_FALSE(has_group(c, "dual"));
  CHECK(c.forward(s, nullptr, 1).g.value().isZero(0));

  CausalTrajModel d(testing::tiny_config(Variant::D).model, 1);
  CHECK_FALSE(has_group(d, "diffusion"));
  CHECK_THROWS_AS(d.sample_backdoor(s, 1), UsageError);
  CHECK_THROWS_AS(d.set_diffusion_clip(1.0), UsageError);
  const ModelOutput od = d.forward(s);
  CHECK(od.factual_samples.size() == 1);
  CHECK_FALSE(od.counterfactual.values.defined());
  CHECK(od.decoder_input.value() == od.factual.values.value());
  CHECK(d.params().parameter_count() < e.params().parameter_count());
}

TEST_CASE("checkpoints round-trip bit for bit") {
  const Config cfg = testing::tiny_config();
  CausalTrajModel model(cfg.model, 12);
  model.set_diffusion_clip(2.25);
  const Scene s = testing::tiny_scenes(cfg, 1)[0];
  const Checkpoint ck = make_checkpoint(model, cfg, "full", 42);
  const auto path = std::filesystem::temp_directory_path() / "causaltraj_model_test.ckpt.json";
  save_checkpoint(ck, path.string());
  const Checkpoint back = load_checkpoint(path.string());
  std::filesystem::remove(path);
  CHECK(back.stage == "full");
  CHECK(back.step == 42);
  CHECK(back.fingerprint == fingerprint(cfg));
  CHECK(back.weights.size() == ck.weights.size());
  for (const auto& [name, m] : ck.weights) CHECK(back.weights.at(name) == m);

  CausalTrajModel restored(config_from_json(back.config_json).model, 99);
  load_weights(restored, back);
  CHECK(restored.params().checksum() == model.params().checksum());
  CHECK(restored.diffusion_clip() == 2.25);
  CHECK(same(restored.forward(s, nullptr, 3).prediction.mu_x, model.forward(s, nullptr, 3).prediction.mu_x));

  CausalTrajModel partial(cfg.model, 98);
  load_weights(partial, back, "diffusion");
  CHECK(partial.params().checksum("diffusion") == model.params().checksum("diffusion"));
  CHECK(partial.params().checksum("decoder") != model.params().checksum("decoder"));
}

TEST_CASE("corrupt checkpoints are rejected") {
  const Config cfg = testing::tiny_config();
  CausalTrajModel model(cfg.model, 13);
  const std::string text = checkpoint_to_json(make_checkpoint(model, cfg, "diffusion", 1));
  CHECK_THROWS_AS(checkpoint_from_json("{"), ParseError);
  CHECK_THROWS_AS(checkpoint_from_json(R"({"format": "other"})"), ParseError);

  std::string versioned = text;
  versioned.replace(versioned.find("\"version\":1"), 11, "\"version\":7");
  CHECK_THROWS_AS(checkpoint_from_json(versioned), ParseError);

  Config other = cfg;
  other.model.fusion.t_rec = 3;
  std::string tampered = text;
  const std::string fp = "\"fingerprint\":\"" + fingerprint_hex(fingerprint(cfg)) + "\"";
  tampered.replace(tampered.find(fp), fp.size(), "\"fingerprint\":\"" + fingerprint_hex(fingerprint(other)) + "\"");
  CHECK_THROWS_AS(checkpoint_from_json(tampered), ValidationError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/x.json"), IoError);
}
