#include "causaltraj/diffusion.hpp"

#include "causaltraj/errors.hpp"

#include <cmath>
#include <numbers>

namespace causaltraj {

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw DomainError("diffusion schedule needs at least one step");
  DiffusionSchedule s;
  double prod = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw DomainError("diffusion betas must lie in (0, 1)");
    prod *= 1.0 - b;
    s.alpha_bars_.push_back(prod);
  }
  s.betas_ = std::move(betas);
  return s;
}

DiffusionSchedule DiffusionSchedule::make(int steps, const std::string& kind) {
  if (steps < 1) throw DomainError("diffusion schedule needs at least one step");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (kind == "cosine") {
    constexpr double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / steps + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (int j = 1; j <= steps; ++j)
      betas[static_cast<std::size_t>(j - 1)] = std::min(1.0 - f(j) / f(j - 1), 0.999);
  } else if (kind == "linear") {
    const double scale = 1000.0 / steps;
    const double lo = std::min(1e-4 * scale, 0.999), hi = std::min(0.02 * scale, 0.999);
    for (int j = 1; j <= steps; ++j)
      betas[static_cast<std::size_t>(j - 1)] = steps == 1 ? hi : lo + (hi - lo) * (j - 1) / (steps - 1.0);
  } else {
    throw ConfigError("unknown diffusion schedule '" + kind + "'");
  }
  return from_betas(std::move(betas));
}

double DiffusionSchedule::alpha_bar(int j) const {
  if (j < 0 || j > steps()) throw DomainError("diffusion step out of range");
  return j == 0 ? 1.0 : alpha_bars_[static_cast<std::size_t>(j - 1)];
}

double DiffusionSchedule::beta(int j) const {
  if (j < 1 || j > steps()) throw DomainError("diffusion step out of range");
  return betas_[static_cast<std::size_t>(j - 1)];
}

double DiffusionSchedule::posterior_variance(int j) const {
  return beta(j) * (1.0 - alpha_bar(j - 1)) / (1.0 - alpha_bar(j));
}

Denoiser::Denoiser(nn::ParamStore& store, int dim, int hidden, int blocks, int heads, const std::string& g)
    : hidden_(hidden),
      input_(store, g + ".input", dim, hidden, g),
      step_(store, g + ".step", hidden, hidden, g),
      final_norm_(store, g + ".final_norm", hidden, g),
      output_(store, g + ".output", hidden, dim, g) {
  for (int b = 0; b < blocks; ++b) {
    const std::string p = g + ".block" + std::to_string(b);
    blocks_.push_back(Block{nn::LayerNorm(store, p + ".norm1", hidden, g),
                            nn::LayerNorm(store, p + ".norm2", hidden, g),
                            nn::Attention(store, p + ".attn", hidden, heads, g),
                            nn::Mlp(store, p + ".ffn", hidden, 2 * hidden, hidden, g)});
  }
}

Tensor EpsilonModel::predict_sets(const Tensor& noised, int step, Index rows_per_set) const {
  if (rows_per_set <= 0 || noised.rows() % rows_per_set != 0) throw DomainError("predict_sets: bad set size");
  if (noised.rows() == rows_per_set) return predict(noised, step);
  std::vector<Tensor> parts;
  for (Index r = 0; r < noised.rows(); r += rows_per_set)
    parts.push_back(predict(ag::slice_rows(noised, r, rows_per_set), step));
  return ag::concat_rows(std::span<const Tensor>(parts));
}

Tensor Denoiser::predict(const Tensor& noised, int step) const { return run(noised, step, nullptr); }

Tensor Denoiser::predict_sets(const Tensor& noised, int step, Index rows_per_set) const {
  if (rows_per_set <= 0 || noised.rows() % rows_per_set != 0) throw DomainError("predict_sets: bad set size");
  if (noised.rows() == rows_per_set) return run(noised, step, nullptr);
  Matrix mask = Matrix::Zero(noised.rows(), noised.rows());
  for (Index r = 0; r < noised.rows(); r += rows_per_set)
    mask.block(r, r, rows_per_set, rows_per_set).setOnes();
  return run(noised, step, &mask);
}

Tensor Denoiser::run(const Tensor& noised, int step, const Matrix* mask) const {
  Tensor emb = ag::silu(step_(ag::constant(nn::sinusoidal_embedding(step, hidden_))));
  Tensor h = ag::add(input_(noised), emb);
  for (const auto& b : blocks_) {
    Tensor z = b.norm1(h);
    h = h + (mask ? b.attention.masked(z, z, *mask) : b.attention(z, z)).output;
    h = h + b.ffn(b.norm2(h));
  }
  return output_(final_norm_(h));
}

Tensor forward_noise(const Tensor& s0, int j, const Tensor& eps, const DiffusionSchedule& sched) {
  if (j < 1 || j > sched.steps()) throw DomainError("forward_noise: step out of range");
  if (eps.rows() != s0.rows() || eps.cols() != s0.cols()) throw DomainError("forward_noise: eps shape mismatch");
  const double ab = sched.alpha_bar(j);
  return ag::scale(s0, std::sqrt(ab)) + ag::scale(eps, std::sqrt(1.0 - ab));
}

Matrix forward_noise_at(const Matrix& s0, double alpha_bar, const Matrix& eps) {
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw DomainError("forward_noise: alpha_bar must lie in (0, 1]");
  return std::sqrt(alpha_bar) * s0 + std::sqrt(1.0 - alpha_bar) * eps;
}

Matrix forward_noise_stepwise(const Matrix& s0, int j, const std::vector<Matrix>& eps, const DiffusionSchedule& sched) {
  if (j < 1 || j > sched.steps()) throw DomainError("forward_noise: step out of range");
  if (static_cast<int>(eps.size()) < j) throw DomainError("forward_noise: need one eps per step");
  Matrix s = s0;
  for (int k = 1; k <= j; ++k)
    s = std::sqrt(sched.alpha(k)) * s + std::sqrt(sched.beta(k)) * eps[static_cast<std::size_t>(k - 1)];
  return s;
}

Matrix predict_start(const Matrix& noised, int j, const Matrix& eps_hat, const DiffusionSchedule& sched) {
  const double ab = sched.alpha_bar(j);
  return (noised - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

namespace {

Matrix reverse_mean(const Matrix& noised, int j, const Matrix& eps_hat, const DiffusionSchedule& sched, double clip,
                    Rng& rng) {
  const double a = sched.alpha(j), ab = sched.alpha_bar(j);
  Matrix mean;
  if (clip > 0) {
    // Posterior mean written through the clipped start estimate.
    const Matrix start = predict_start(noised, j, eps_hat, sched).cwiseMax(-clip).cwiseMin(clip);
    const double ab_prev = sched.alpha_bar(j - 1);
    mean = (std::sqrt(ab_prev) * sched.beta(j) / (1.0 - ab)) * start +
           (std::sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)) * noised;
  } else {
    mean = (noised - (sched.beta(j) / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(a);
  }
  if (j > 1) mean += std::sqrt(sched.posterior_variance(j)) * standard_normal(noised.rows(), noised.cols(), rng);
  return mean;
}

}  // namespace

Matrix denoise_step(const Matrix& noised, int j, const EpsilonModel& model, const DiffusionSchedule& sched, Rng& rng,
                    double clip) {
  if (j < 1 || j > sched.steps()) throw DomainError("denoise_step: step out of range");
  Matrix eps_hat;
  {
    ag::NoGradGuard ng;
    eps_hat = model.predict(ag::constant(noised), j).value();
  }
  if (!eps_hat.allFinite()) throw NumericalError("denoiser produced a non-finite output at step " + std::to_string(j));
  return reverse_mean(noised, j, eps_hat, sched, clip, rng);
}

BackdoorSet sample_backdoor_set(const Matrix& spatial_tokens, int n, const EpsilonModel& model,
                                const DiffusionSchedule& sched, std::uint64_t seed, double clip) {
  if (n < 1) throw DomainError("backdoor set size must be >= 1");
  ag::NoGradGuard ng;
  const Index rows = spatial_tokens.rows(), cols = spatial_tokens.cols();
  const int m = sched.steps();
  // The n chains run stacked in one tensor; each keeps its own noise stream.
  std::vector<Rng> rngs;
  Matrix s(rows * n, cols);
  for (int i = 0; i < n; ++i) {
    rngs.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(i)));
    s.middleRows(i * rows, rows) = forward_noise_at(spatial_tokens, sched.alpha_bar(m), standard_normal(rows, cols, rngs.back()));
  }
  for (int j = m; j >= 1; --j) {
    const Matrix eps_hat = model.predict_sets(ag::constant(s), j, rows).value();
    if (!eps_hat.allFinite()) throw NumericalError("denoiser produced a non-finite output at step " + std::to_string(j));
    for (int i = 0; i < n; ++i)
      s.middleRows(i * rows, rows) =
          reverse_mean(s.middleRows(i * rows, rows), j, eps_hat.middleRows(i * rows, rows), sched, clip, rngs[static_cast<std::size_t>(i)]);
  }
  BackdoorSet out;
  for (int i = 0; i < n; ++i) out.samples.push_back(s.middleRows(i * rows, rows));
  return out;
}

DiffusionNorm diffusion_norm_from_string(const std::string& s) {
  if (s == "squared") return DiffusionNorm::Squared;
  if (s == "l2") return DiffusionNorm::L2;
  throw ConfigError("unknown diffusion norm '" + s + "'");
}

Tensor diffusion_loss(const std::vector<Matrix>& batch, const EpsilonModel& model, const DiffusionSchedule& sched,
                      Rng& rng, DiffusionNorm norm) {
  if (batch.empty()) throw DomainError("diffusion_loss: empty batch");
  std::uniform_int_distribution<int> step(1, sched.steps());
  std::vector<Tensor> terms;
  for (const Matrix& s0 : batch) {
    const int j = step(rng);
    const Matrix eps = standard_normal(s0.rows(), s0.cols(), rng);
    const Matrix noised = forward_noise_at(s0, sched.alpha_bar(j), eps);
    Tensor diff = ag::constant(eps) - model.predict(ag::constant(noised), j);
    Tensor sq = ag::sum(ag::square(diff));
    terms.push_back(norm == DiffusionNorm::Squared ? sq : ag::sqrt(sq, 1e-12));
  }
  return ag::scale(ag::sum(ag::concat_rows(std::span<const Tensor>(terms))), 1.0 / static_cast<double>(batch.size()));
}

}  // namespace causaltraj
