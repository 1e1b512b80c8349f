#include "doctest.h"

#include "causaltraj/encoders.hpp"
#include "causaltraj/errors.hpp"
#include "causaltraj/generator.hpp"
#include "gradcheck.hpp"

using namespace causaltraj;

namespace {

EncoderConfig small_config(int dim = 8) {
  EncoderConfig c;
  c.dim = dim;
  return c;
}

std::vector<MapPolyline> random_map(int count, int n, Rng& rng) {
  std::vector<MapPolyline> map(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    map[static_cast<std::size_t>(i)].id = i;
    map[static_cast<std::size_t>(i)].points = standard_normal(n, 4, rng) * 5.0;
  }
  return map;
}

AgentTrack random_track(int history, int future, Rng& rng) {
  AgentTrack t;
  t.history_length = history;
  t.trajectory.dt = 0.5;
  t.trajectory.points = standard_normal(history + future, 2, rng) * 3.0;
  t.trajectory.valid.assign(static_cast<std::size_t>(history + future), true);
  return t;
}

BevRaster random_bev(int size, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  BevRaster b;
  b.agent = Matrix::NullaryExpr(size, size, [&] { return u(rng); });
  b.map = Matrix::NullaryExpr(size, size, [&] { return u(rng); });
  b.raster = Matrix::NullaryExpr(size, size, [&] { return u(rng); });
  return b;
}

}  // namespace

TEST_CASE("spatial encoder shape, equivariance and duplicates") {
  nn::ParamStore store(1);
  SpatialEncoder enc(store, small_config(32), 4);
  Rng rng(2);
  auto map = random_map(3, 10, rng);
  const Matrix out = enc.encode(map).value();
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 32);

  std::vector<MapPolyline> perm{map[2], map[0], map[1]};
  const Matrix pout = enc.encode(perm).value();
  CHECK((pout.row(0) - out.row(2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((pout.row(1) - out.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((pout.row(2) - out.row(1)).cwiseAbs().maxCoeff() < 1e-12);

  std::vector<MapPolyline> dup{map[0], map[1], map[1]};
  const Matrix dout = enc.encode(dup).value();
  CHECK((dout.row(1) - dout.row(2)).cwiseAbs().maxCoeff() < 1e-12);

  // Every token sees every polyline.
  std::vector<MapPolyline> moved = map;
  moved[2].points(0, 0) += 3.0;
  const Matrix mout = enc.encode(moved).value();
  CHECK((mout.row(0) - out.row(0)).norm() > 0);

  CHECK_THROWS_AS(enc.encode({}), EncodingError);
}

TEST_CASE("temporal encoder handles zero and permuted neighbours") {
  nn::ParamStore store(3);
  TemporalEncoder enc(store, small_config(), 2);
  Rng rng(4);
  AgentTrack target = random_track(9, 10, rng);
  auto none = enc.encode(target, {});
  CHECK(none.target.rows() == 1);
  CHECK(none.target.cols() == 8);
  CHECK(none.neighbors.rows() == 0);
  CHECK(none.neighbor_mask.size() == 0);

  std::vector<AgentTrack> nb{random_track(9, 10, rng), random_track(9, 10, rng), random_track(9, 10, rng)};
  auto a = enc.encode(target, nb);
  auto b = enc.encode(target, {nb[2], nb[0], nb[1]});
  CHECK((b.neighbors.value().row(0) - a.neighbors.value().row(2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((b.neighbors.value().row(1) - a.neighbors.value().row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(a.target.value() == none.target.value());

  std::vector<AgentTrack> zeros{zero_history(nb[0]), zero_history(nb[1])};
  auto z = enc.encode(zero_history(target), zeros);
  CHECK(z.neighbors.value().row(0) == z.neighbors.value().row(1));
  CHECK(z.target.value() == z.neighbors.value().row(0));
}

TEST_CASE("BEV encoder gives a fixed token grid") {
  nn::ParamStore store(5);
  BevEncoder enc(store, small_config(32));
  Rng rng(6);
  const Matrix t64 = enc.encode(random_bev(64, rng)).value();
  CHECK(t64.rows() == 16);
  CHECK(t64.cols() == 32);
  CHECK(enc.encode(random_bev(40, rng)).value().rows() == 16);

  BevRaster zero;
  zero.agent = zero.map = zero.raster = Matrix::Zero(64, 64);
  BevRaster zero2;
  zero2.agent = zero2.map = zero2.raster = Matrix::Zero(32, 32);
  const Matrix z = enc.encode(zero).value();
  for (Index r = 1; r < z.rows(); ++r) CHECK(z.row(r) == z.row(0));
  CHECK(enc.encode(zero2).value() == z);

  BevRaster b = random_bev(64, rng);
  BevRaster scaled = b;
  scaled.agent *= 1.0;
  CHECK(enc.encode(scaled).value() == enc.encode(b).value());

  BevRaster bad = b;
  bad.map = Matrix::Zero(32, 64);
  CHECK_THROWS_AS(enc.encode(bad), ValidationError);
}

TEST_CASE("encoder outputs stay finite over many random scenes") {
  nn::ParamStore store(7);
  EncoderConfig cfg = small_config(16);
  SpatialEncoder sp(store, cfg, 4);
  TemporalEncoder tm(store, cfg, 2);
  BevEncoder bv(store, cfg);
  Rng rng(8);
  bool finite = true;
  for (int i = 0; i < 1000; ++i) {
    auto map = random_map(1 + i % 5, 2 + i % 9, rng);
    AgentTrack target = random_track(1 + i % 9, 2, rng);
    std::vector<AgentTrack> nb;
    for (int k = 0; k < i % 4; ++k) nb.push_back(random_track(target.history_length, 2, rng));
    auto tt = tm.encode(target, nb);
    finite = finite && sp.encode(map).value().allFinite() && tt.target.value().allFinite() &&
             tt.neighbors.value().allFinite();
    if (i % 10 == 0) finite = finite && bv.encode(random_bev(16 + i % 48, rng)).value().allFinite();
  }
  CHECK(finite);
}

TEST_CASE("encoder input gradients match finite differences") {
  nn::ParamStore store(9);
  EncoderConfig cfg = small_config(8);
  cfg.bev_prepool = 1;
  cfg.pyramid_grid = 2;
  SpatialEncoder sp(store, cfg, 4);
  TemporalEncoder tm(store, cfg, 2);
  BevEncoder bv(store, cfg);
  Rng rng(10);
  Tensor map_in(spatial_input(random_map(3, 4, rng), 0.1), true);
  Tensor hist_in(temporal_input({}, 0.1), true);
  AgentTrack a = random_track(5, 1, rng), b = random_track(5, 1, rng);
  hist_in = Tensor(temporal_input({&a, &b}, 0.1), true);
  BevRaster raster = random_bev(8, rng);
  Tensor ag_in(raster.agent, true), mp_in(raster.map, true), rs_in(raster.raster, true);
  Matrix w_s = standard_normal(3, 8, rng), w_t = standard_normal(2, 8, rng), w_b = standard_normal(4, 8, rng);

  auto spatial = testing::gradcheck([&] { return ag::sum(sp(map_in) * ag::constant(w_s)); }, {map_in}, 1e-3);
  CHECK(spatial.max_rel_error < 1e-4);
  auto temporal = testing::gradcheck([&] { return ag::sum(tm(hist_in) * ag::constant(w_t)); }, {hist_in}, 1e-3);
  CHECK(temporal.max_rel_error < 1e-4);
  auto bev = testing::gradcheck([&] { return ag::sum(bv(ag_in, mp_in, rs_in) * ag::constant(w_b)); },
                                {ag_in, mp_in, rs_in}, 1e-3);
  CHECK(bev.max_rel_error < 1e-4);
}

TEST_CASE("generated scenes encode to the documented shapes") {
  GeneratorConfig g;
  g.train_scenes = 3;
  g.test_scenes = 0;
  auto d = generate_confounded_dataset(g, 1);
  nn::ParamStore store(11);
  EncoderConfig cfg;
  SpatialEncoder sp(store, cfg, 4);
  TemporalEncoder tm(store, cfg, 2);
  BevEncoder bv(store, cfg);
  for (const auto& s : d.train) {
    CHECK(sp.encode(s.map).value().rows() == 4);
    CHECK(bv.encode(s.bev).value().rows() == 16);
    auto tt = tm.encode(s.target, s.neighbors);
    CHECK(tt.neighbors.rows() == static_cast<Index>(s.neighbors.size()));
  }
}
