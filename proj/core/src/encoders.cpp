#include "causaltraj/encoders.hpp"

#include "causaltraj/errors.hpp"

namespace causaltraj {

Matrix spatial_input(const std::vector<MapPolyline>& map, double input_scale) {
  if (map.empty()) throw EncodingError("spatial encoder needs at least one polyline");
  const Index n = map[0].points.rows();
  const Index w = map[0].points.cols();
  Matrix out(static_cast<Index>(map.size()), n * w);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const Matrix& p = map[i].points;
    if (p.rows() != n || p.cols() != w) throw EncodingError("polylines must share waypoint count and width");
    for (Index k = 0; k < n; ++k)
      for (Index a = 0; a < w; ++a) out(static_cast<Index>(i), k * w + a) = a < 2 ? p(k, a) * input_scale : p(k, a);
  }
  return out;
}

Matrix temporal_input(const std::vector<const AgentTrack*>& tracks, double input_scale) {
  if (tracks.empty()) return Matrix(0, 0);
  const Index h = tracks[0]->history_length;
  const Index w = tracks[0]->state_width();
  if (h < 1) throw EncodingError("temporal encoder needs a non-empty history");
  Matrix out(static_cast<Index>(tracks.size()), h * w);
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    if (tracks[i]->history_length != h || tracks[i]->state_width() != w)
      throw EncodingError("all tracks must share history length and state width");
    const Matrix s = tracks[i]->history_states();
    for (Index t = 0; t < h; ++t)
      for (Index a = 0; a < w; ++a) out(static_cast<Index>(i), t * w + a) = a < 2 ? s(t, a) * input_scale : s(t, a);
  }
  return out;
}

SpatialEncoder::SpatialEncoder(nn::ParamStore& store, const EncoderConfig& cfg, int map_width, const std::string& g)
    : cfg_(cfg),
      width_(map_width),
      gru_(store, g + ".gru", map_width, cfg.dim, g),
      norm1_(store, g + ".norm1", cfg.dim, g),
      norm2_(store, g + ".norm2", cfg.dim, g),
      graph_(store, g + ".graph", cfg.dim, cfg.gat_heads, g),
      ffn_(store, g + ".ffn", cfg.dim, cfg.dim, cfg.dim, g) {}

Tensor SpatialEncoder::operator()(const Tensor& input) const {
  if (input.rows() == 0) throw EncodingError("spatial encoder needs at least one polyline");
  if (input.cols() % width_ != 0) throw EncodingError("polyline input width is not a multiple of W_m");
  const Index n = input.cols() / width_;
  Tensor h = ag::zeros(input.rows(), cfg_.dim);
  for (Index k = 0; k < n; ++k) h = gru_(ag::slice_cols(input, k * width_, width_), h);
  Tensor z = norm1_(h);
  h = h + graph_(z, z).output;
  return h + ffn_(norm2_(h));
}

Tensor SpatialEncoder::encode(const std::vector<MapPolyline>& map) const {
  return (*this)(ag::constant(spatial_input(map, cfg_.input_scale)));
}

TemporalEncoder::TemporalEncoder(nn::ParamStore& store, const EncoderConfig& cfg, int state_width,
                                 const std::string& g)
    : cfg_(cfg), width_(state_width), gru_(store, g + ".gru", state_width, cfg.dim, g) {}

Tensor TemporalEncoder::operator()(const Tensor& input) const {
  if (input.cols() == 0) throw EncodingError("temporal encoder needs a non-empty history");
  if (input.cols() % width_ != 0) throw EncodingError("history input width is not a multiple of W_a");
  const Index steps = input.cols() / width_;
  Tensor h = ag::zeros(input.rows(), cfg_.dim);
  for (Index t = 0; t < steps; ++t) h = gru_(ag::slice_cols(input, t * width_, width_), h);
  return h;
}

Tensor TemporalEncoder::encode_target(const AgentTrack& target) const {
  return (*this)(ag::constant(temporal_input({&target}, cfg_.input_scale)));
}

TemporalTokens TemporalEncoder::encode(const AgentTrack& target, const std::vector<AgentTrack>& neighbors) const {
  TemporalTokens out;
  out.target = encode_target(target);
  std::vector<const AgentTrack*> ptrs;
  for (const auto& n : neighbors) ptrs.push_back(&n);
  if (ptrs.empty()) {
    out.neighbors = ag::zeros(0, cfg_.dim);
  } else {
    if (neighbors[0].history_length != target.history_length)
      throw EncodingError("neighbour histories must align with the target history");
    out.neighbors = (*this)(ag::constant(temporal_input(ptrs, cfg_.input_scale)));
  }
  out.neighbor_mask = Eigen::VectorXd::Ones(static_cast<Index>(neighbors.size()));
  return out;
}

BevEncoder::BevEncoder(nn::ParamStore& store, const EncoderConfig& cfg, const std::string& g) : cfg_(cfg) {
  static const char* layer_names[] = {"agent", "map", "raster"};
  kernels_.resize(3);
  biases_.resize(3);
  for (int l = 0; l < 3; ++l)
    for (int k : cfg.kernel_sizes)
      for (int c = 0; c < cfg.kernel_channels; ++c) {
        const std::string base = g + "." + layer_names[l] + ".k" + std::to_string(k) + "c" + std::to_string(c);
        kernels_[static_cast<std::size_t>(l)].push_back(store.weight(base + ".w", k, k, g));
        biases_[static_cast<std::size_t>(l)].push_back(store.zeros(base + ".b", 1, 1, g));
      }
  const Index features = 3 * static_cast<Index>(cfg.kernel_sizes.size()) * cfg.kernel_channels;
  project_ = nn::Mlp(store, g + ".project", features, cfg.dim, cfg.dim, g);
}

Tensor BevEncoder::operator()(const Tensor& agent, const Tensor& map, const Tensor& raster) const {
  const Tensor* layers[] = {&agent, &map, &raster};
  for (const Tensor* t : layers)
    if (t->rows() != agent.rows() || t->cols() != agent.cols())
      throw ValidationError("bev", "semantic layers must share H x W");
  if (agent.rows() == 0 || agent.cols() == 0) throw ValidationError("bev", "empty raster");
  const Index grid = cfg_.pyramid_grid;
  std::vector<Tensor> features;
  for (int l = 0; l < 3; ++l) {
    Tensor img = *layers[l];
    const Index f = cfg_.bev_prepool;
    if (f > 1 && img.rows() % f == 0 && img.cols() % f == 0 && img.rows() / f >= grid && img.cols() / f >= grid)
      img = ag::avg_pool(img, f);
    const auto& ks = kernels_[static_cast<std::size_t>(l)];
    const auto& bs = biases_[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < ks.size(); ++i) {
      Tensor response = ag::silu(ag::add(ag::conv2d_same(img, ks[i]), bs[i]));
      features.push_back(ag::flatten(ag::adaptive_avg_pool(response, grid, grid)));
    }
  }
  Tensor cells = ag::transpose(ag::concat_rows(std::span<const Tensor>(features)));
  return project_(cells);
}

Tensor BevEncoder::encode(const BevRaster& bev) const {
  return (*this)(ag::constant(bev.agent), ag::constant(bev.map), ag::constant(bev.raster));
}

}  // namespace causaltraj
