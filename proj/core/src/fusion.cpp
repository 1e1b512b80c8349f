#include "causaltraj/fusion.hpp"

#include "causaltraj/errors.hpp"

#include <cmath>

namespace causaltraj {

ProgressiveFusion::ProgressiveFusion(nn::ParamStore& store, int dim, int maneuvers, int heads, const std::string& g)
    : q0_(store.weight(g + ".q0", maneuvers, dim, g)),
      query_norm_(store, g + ".query_norm", dim, g),
      key_norm_(store, g + ".key_norm", dim, g),
      ffn_norm_(store, g + ".ffn_norm", dim, g),
      attention_(store, g + ".attn", dim, heads, g, false),
      ffn_(store, g + ".ffn", dim, dim, dim, g) {}

AnchorQuery ProgressiveFusion::initial() const { return AnchorQuery{q0_, 0, false}; }

AnchorQuery ProgressiveFusion::refine(const AnchorQuery& q, const ContextToken& ctx) const {
  Tensor h = q.values + attention_(query_norm_(q.values), key_norm_(ctx.views)).output;
  h = h + ffn_(ffn_norm_(h));
  return AnchorQuery{h, q.stage + 1, q.warning};
}

AnchorQuery ProgressiveFusion::fuse(const ContextToken& ctx, const AnchorQuery& q0, int t_rec) const {
  if (t_rec < 0) throw DomainError("progressive fusion: T_rec must be >= 0");
  if (t_rec == 0) return AnchorQuery{q0.values, q0.stage, true};
  AnchorQuery q = q0;
  for (int s = 0; s < t_rec; ++s) q = refine(q, ctx);
  return q;
}

namespace {

// Row-shift operator: (S x)_t = x_{t + offset}, zero outside.
Matrix shift_matrix(Index n, Index offset) {
  Matrix s = Matrix::Zero(n, n);
  for (Index t = 0; t < n; ++t)
    if (t + offset >= 0 && t + offset < n) s(t, t + offset) = 1.0;
  return s;
}

}  // namespace

DualScaleFusion::DualScaleFusion(nn::ParamStore& store, int dim, const FusionConfig& cfg, int history_length,
                                 double input_scale, const std::string& g)
    : cfg_(cfg), history_(history_length), scale_(input_scale) {
  if (history_length < 1) throw ConfigError("dual-scale fusion needs a non-empty history");
  const int c = cfg.channels;
  const int half = cfg.fine_kernel / 2;
  for (int o = -half; o <= half; ++o) {
    time_shifts_.push_back(shift_matrix(history_length, o));
    fine_taps_.push_back(store.weight(g + ".fine.tap" + std::to_string(o + half), 2, c, g));
  }
  fine_bias_ = store.zeros(g + ".fine.b", 1, c, g);
  fine_out_ = nn::Linear(store, g + ".fine.out", static_cast<Index>(history_length) * c, dim, g);

  neighbor_in_ = nn::Linear(store, g + ".coarse.in", 2 * static_cast<Index>(history_length), c, g, false);
  const Index rows = cfg.grid_rows, cols = cfg.grid_cols;
  for (int dr = -1; dr <= 1; ++dr)
    for (int dc = -1; dc <= 1; ++dc) {
      Matrix s = Matrix::Zero(rows * cols, rows * cols);
      for (Index r = 0; r < rows; ++r)
        for (Index q = 0; q < cols; ++q) {
          const Index rr = r + dr, qq = q + dc;
          if (rr >= 0 && rr < rows && qq >= 0 && qq < cols) s(r * cols + q, rr * cols + qq) = 1.0;
        }
      grid_shifts_.push_back(std::move(s));
      coarse_taps_.push_back(
          store.weight(g + ".coarse.tap" + std::to_string((dr + 1) * 3 + dc + 1), c, c, g));
    }
  coarse_out_ = nn::Linear(store, g + ".coarse.out", c, dim, g, false);
}

Matrix DualScaleFusion::relative_history(const AgentTrack& track, const Eigen::RowVector2d& origin) const {
  if (track.history_length != history_) throw EncodingError("dual-scale fusion: history length mismatch");
  Matrix rel = Matrix::Zero(history_, 2);
  for (Index t = 0; t < history_; ++t)
    if (track.trajectory.valid[static_cast<std::size_t>(t)])
      rel.row(t) = (track.trajectory.points.row(t) - origin) * scale_;
  return rel;
}

Tensor DualScaleFusion::target_branch(const AgentTrack& target) const {
  const Eigen::RowVector2d origin = target.trajectory.points.row(history_ - 1);
  Tensor x = ag::constant(relative_history(target, origin));
  Tensor h = ag::repeat_rows(fine_bias_, history_);
  for (std::size_t o = 0; o < fine_taps_.size(); ++o)
    h = h + ag::matmul(ag::constant(time_shifts_[o]), ag::matmul(x, fine_taps_[o]));
  return fine_out_(ag::flatten(ag::silu(h)));
}

std::vector<int> DualScaleFusion::cells(const AgentTrack& target, const std::vector<AgentTrack>& neighbors) const {
  const Eigen::RowVector2d origin = target.trajectory.points.row(history_ - 1);
  std::vector<int> out;
  for (const auto& n : neighbors) {
    const Eigen::RowVector2d d = n.trajectory.points.row(n.history_length - 1) - origin;
    const double r = std::floor(d.x() / cfg_.cell_size + cfg_.grid_rows / 2.0);
    const double c = std::floor(d.y() / cfg_.cell_size + cfg_.grid_cols / 2.0);
    const bool inside = r >= 0 && r < cfg_.grid_rows && c >= 0 && c < cfg_.grid_cols &&
                        n.trajectory.valid[static_cast<std::size_t>(n.history_length - 1)];
    out.push_back(inside ? static_cast<int>(r) * cfg_.grid_cols + static_cast<int>(c) : -1);
  }
  return out;
}

Tensor DualScaleFusion::neighbor_branch(const AgentTrack& target, const std::vector<AgentTrack>& neighbors) const {
  const std::vector<int> where = cells(target, neighbors);
  const Eigen::RowVector2d origin = target.trajectory.points.row(history_ - 1);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < where.size(); ++i)
    if (where[i] >= 0) kept.push_back(i);
  if (kept.empty()) return ag::zeros(1, coarse_out_.out_features());

  const Index n_cells = static_cast<Index>(cfg_.grid_rows) * cfg_.grid_cols;
  Matrix feats(static_cast<Index>(kept.size()), 2 * static_cast<Index>(history_));
  Matrix assign = Matrix::Zero(n_cells, static_cast<Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const Matrix rel = relative_history(neighbors[kept[k]], origin);
    for (Index t = 0; t < history_; ++t) feats.row(static_cast<Index>(k)).segment(2 * t, 2) = rel.row(t);
    assign(where[kept[k]], static_cast<Index>(k)) = 1.0;
  }
  Tensor grid = ag::matmul(ag::constant(assign), neighbor_in_(ag::constant(feats)));
  Tensor h = ag::zeros(n_cells, static_cast<Index>(cfg_.channels));
  for (std::size_t o = 0; o < coarse_taps_.size(); ++o)
    h = h + ag::matmul(ag::constant(grid_shifts_[o]), ag::matmul(grid, coarse_taps_[o]));
  return coarse_out_(ag::mean_rows(ag::silu(h)));
}

Tensor DualScaleFusion::operator()(const AgentTrack& target, const std::vector<AgentTrack>& neighbors) const {
  return target_branch(target) + neighbor_branch(target, neighbors);
}

}  // namespace causaltraj
