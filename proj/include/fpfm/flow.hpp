#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpfm/datasets.hpp"
#include "fpfm/matrix.hpp"
#include "fpfm/rng.hpp"

namespace fpfm {

struct DivergedIntegrationError : std::runtime_error {
  std::size_t step;
  std::size_t sample;
  DivergedIntegrationError(std::size_t step_, std::size_t sample_)
      : std::runtime_error("integration produced non-finite values at step " +
                           std::to_string(step_) + ", sample " + std::to_string(sample_)),
        step(step_),
        sample(sample_) {}
};

namespace detail {
inline std::size_t first_non_finite_row(const DenseMatrix& v) {
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j)
      if (!std::isfinite(v(i, j))) return i;
  return v.rows();
}
}  // namespace detail

// Linear interpolation batch: xt = (1-t) x0 + t x1, target velocity u = x1 - x0.
struct PathBatch {
  DenseMatrix x0, x1, xt, u;
  std::vector<double> t;

  std::size_t count() const { return xt.rows(); }
  std::size_t dim() const { return xt.cols(); }
};

struct IntegratorConfig {
  std::size_t steps = 100;
  double t_max = 1.0;
};

// Batch evaluator (x, t) -> velocities; evaluation must be side-effect free.
struct VelocityField {
  std::string tag;
  std::function<DenseMatrix(const DenseMatrix&, double)> eval;

  DenseMatrix operator()(const DenseMatrix& x, double t) const { return eval(x, t); }
};

inline DenseMatrix sample_noise(std::size_t m, std::size_t n, Rng& rng) {
  if (m < 1 || n < 1) throw std::invalid_argument("sample_noise: m and n must be >= 1");
  DenseMatrix x(m, n);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return x;
}

// Draws a batch of size batch_m from the dataset (with replacement) and pairs
// it with fresh noise. batch_m == 0 uses every dataset row once, in order.
// shared_t, when set, is used for all rows; otherwise t ~ Unif[0,1) per row.
inline PathBatch make_path_batch(const Dataset& data, std::size_t batch_m, Rng& rng,
                                 std::optional<double> shared_t = std::nullopt) {
  if (data.count() == 0) throw std::invalid_argument("make_path_batch: empty dataset");
  const std::size_t n = data.dim();
  const std::size_t m = batch_m == 0 ? data.count() : batch_m;
  PathBatch pb;
  pb.x1 = DenseMatrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t src = batch_m == 0 ? i : rng.index(data.count());
    for (std::size_t j = 0; j < n; ++j) pb.x1(i, j) = data.samples(src, j);
  }
  pb.x0 = sample_noise(m, n, rng);
  pb.t.resize(m);
  for (std::size_t i = 0; i < m; ++i) pb.t[i] = shared_t ? *shared_t : rng.uniform();
  pb.xt = DenseMatrix(m, n);
  pb.u = DenseMatrix(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double t = pb.t[i];
    for (std::size_t j = 0; j < n; ++j) {
      pb.xt(i, j) = (1.0 - t) * pb.x0(i, j) + t * pb.x1(i, j);
      pb.u(i, j) = pb.x1(i, j) - pb.x0(i, j);
    }
  }
  return pb;
}

// Explicit Euler over [0, t_max]: x <- x + dt * field(x, j*dt).
inline DenseMatrix integrate(const VelocityField& field, DenseMatrix x,
                             const IntegratorConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("integrate: steps must be >= 1");
  if (!(cfg.t_max > 0.0 && cfg.t_max <= 1.0))
    throw std::invalid_argument("integrate: t_max must be in (0, 1]");
  const double dt = cfg.t_max / static_cast<double>(cfg.steps);
  for (std::size_t j = 0; j < cfg.steps; ++j) {
    const double t = static_cast<double>(j) * dt;
    DenseMatrix v = field(x, t);
    if (!v.all_finite()) throw DivergedIntegrationError(j, detail::first_non_finite_row(v));
    v *= dt;
    x += v;
  }
  return x;
}

// Euler with negated steps from t = 1 down to t = 1 - t_max.
inline DenseMatrix integrate_backward(const VelocityField& field, DenseMatrix x,
                                      const IntegratorConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("integrate_backward: steps must be >= 1");
  const double dt = cfg.t_max / static_cast<double>(cfg.steps);
  for (std::size_t j = 0; j < cfg.steps; ++j) {
    const double t = 1.0 - static_cast<double>(j) * dt;
    DenseMatrix v = field(x, t);
    if (!v.all_finite()) throw DivergedIntegrationError(j, detail::first_non_finite_row(v));
    v *= dt;
    x -= v;
  }
  return x;
}

}  // namespace fpfm
