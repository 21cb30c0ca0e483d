#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "fpfm/basis.hpp"
#include "fpfm/datasets.hpp"
#include "fpfm/flow.hpp"
#include "fpfm/linalg.hpp"
#include "fpfm/matrix.hpp"

namespace fpfm {

struct ConditionalVelocityEstimate {
  std::vector<double> v_hat;        // n
  std::vector<double> log_weights;  // unnormalized, one per target sample
  double effective_sample_size = 0.0;
  bool degenerate = false;
};

struct DynamicConfig {
  double t_clamp_eps = 1e-2;         // field evaluates at min(t, 1 - eps)
  std::size_t anchor_subsample = 64; // anchors per distribution per training step
  double min_ess = 1.5;              // below this, fall back to the max-weight sample
  double lambda = 1e-6;
};

namespace detail {

// Single-row MLP evaluation with caller-owned scratch, for the per-sample
// dynamic path where batched forward would drown in allocations.
inline void mlp_forward_row(const Mlp& net, const double* in, std::vector<double>& buf_a,
                            std::vector<double>& buf_b, double* out) {
  const double* cur = in;
  std::size_t cur_dim = net.input_dim();
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const DenseMatrix& w = net.weights[l];
    const std::size_t fan_out = w.cols();
    std::vector<double>& dst = (l % 2 == 0) ? buf_a : buf_b;
    dst.assign(net.biases[l].row(0), net.biases[l].row(0) + fan_out);
    for (std::size_t i = 0; i < cur_dim; ++i) {
      const double xi = cur[i];
      const double* wi = w.row(i);
      for (std::size_t j = 0; j < fan_out; ++j) dst[j] += xi * wi[j];
    }
    if (l + 1 < net.layer_count()) {
      if (net.activation == Activation::Tanh)
        for (double& v : dst) v = fast_tanh(v);
      else
        for (double& v : dst) v = std::max(0.0, v);
    }
    cur = dst.data();
    cur_dim = fan_out;
  }
  std::copy(cur, cur + cur_dim, out);
}

}  // namespace detail

// Self-normalized importance-sampling estimate of E[X1 - X0 | X_t = x] from
// target samples alone: for each target x1, the unique consistent noise point
// is x0* = (x - t x1)/(1 - t); weights are the standard-normal density of
// x0*, normalized in log space.
inline ConditionalVelocityEstimate conditional_velocity(const std::vector<double>& x, double t,
                                                        const DenseMatrix& targets,
                                                        double min_ess = 1.5) {
  if (!(t >= 0.0 && t < 1.0))
    throw std::domain_error("conditional_velocity: t must satisfy 0 <= t < 1");
  if (targets.rows() == 0) throw std::invalid_argument("conditional_velocity: no target samples");
  const std::size_t m = targets.rows();
  const std::size_t n = targets.cols();
  if (x.size() != n) throw ShapeError("conditional_velocity: x dimension mismatch");

  ConditionalVelocityEstimate est;
  est.log_weights.resize(m);
  const double inv = 1.0 / (1.0 - t);
  const double log_norm_const = -0.5 * static_cast<double>(n) * std::log(kTwoPi);
  double max_lw = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const double* x1 = targets.row(i);
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double x0s = (x[j] - t * x1[j]) * inv;
      sq += x0s * x0s;
    }
    est.log_weights[i] = -0.5 * sq + log_norm_const;
    max_lw = std::max(max_lw, est.log_weights[i]);
  }

  est.v_hat.assign(n, 0.0);
  bool weights_ok = std::isfinite(max_lw);
  double sum_w = 0.0, sum_w2 = 0.0;
  if (weights_ok) {
    // log-sum-exp pass
    for (std::size_t i = 0; i < m; ++i) sum_w += std::exp(est.log_weights[i] - max_lw);
    const double lse = max_lw + std::log(sum_w);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double w = std::exp(est.log_weights[i] - lse);
      total += w;
      sum_w2 += w * w;
      const double* x1 = targets.row(i);
      for (std::size_t j = 0; j < n; ++j) {
        const double x0s = (x[j] - t * x1[j]) * inv;
        est.v_hat[j] += w * (x1[j] - x0s);
      }
    }
    weights_ok = std::isfinite(total) && total > 0.0;
    est.effective_sample_size = weights_ok ? 1.0 / sum_w2 : 0.0;
  }

  if (!weights_ok || est.effective_sample_size < min_ess) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i)
      if (est.log_weights[i] > est.log_weights[best]) best = i;
    const double* x1 = targets.row(best);
    for (std::size_t j = 0; j < n; ++j) {
      const double x0s = (x[j] - t * x1[j]) * inv;
      est.v_hat[j] = x1[j] - x0s;
    }
    est.degenerate = true;
    if (!weights_ok) est.effective_sample_size = 1.0;
  }
  return est;
}

inline ConditionalVelocityEstimate conditional_velocity(const std::vector<double>& x, double t,
                                                        const Dataset& targets,
                                                        double min_ess = 1.5) {
  return conditional_velocity(x, t, targets.samples, min_ess);
}

// Least squares of a single vector onto the pointwise basis values:
//   G[i][j] = (1/n) g_i . g_j,  b[i] = (1/n) v . g_i,  (G + lambda I) c = b.
// v_rows holds one basis net's output per row (k x n).
inline std::vector<double> project_pointwise(const DenseMatrix& v_rows,
                                             const std::vector<double>& v, double lambda) {
  const std::size_t k = v_rows.rows();
  const std::size_t n = v_rows.cols();
  if (v.size() != n) throw ShapeError("project_pointwise: vector dimension mismatch");
  const double scale = 1.0 / static_cast<double>(n);
  DenseMatrix g = matmul_nt(v_rows, v_rows);
  g *= scale;
  std::vector<double> b(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double* gi = v_rows.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += gi[j] * v[j];
    b[i] = scale * s;
  }
  return solve_ridge(g, b, lambda);
}

// Basis values at a single state-time, one net per row.
inline DenseMatrix basis_values_at(const BasisSet& basis, const std::vector<double>& x, double t) {
  const std::size_t n = basis.n;
  std::vector<double> z(n + 1);
  std::copy(x.begin(), x.end(), z.begin());
  z[n] = t;
  DenseMatrix v(basis.k, n);
  std::vector<double> buf_a, buf_b;
  for (std::size_t i = 0; i < basis.k; ++i)
    detail::mlp_forward_row(basis.nets[i], z.data(), buf_a, buf_b, v.row(i));
  return v;
}

// Localized coefficients c(x, t) of the state-dependent projection.
inline std::vector<double> project_dynamic(const BasisSet& basis, const std::vector<double>& x,
                                           double t, const Dataset& targets,
                                           const DynamicConfig& cfg = {}) {
  ConditionalVelocityEstimate est = conditional_velocity(x, t, targets, cfg.min_ess);
  if (basis.mean_field) {
    std::vector<double> z(basis.n + 1);
    std::copy(x.begin(), x.end(), z.begin());
    z[basis.n] = t;
    std::vector<double> buf_a, buf_b, mf(basis.n);
    detail::mlp_forward_row(*basis.mean_field, z.data(), buf_a, buf_b, mf.data());
    for (std::size_t j = 0; j < basis.n; ++j) est.v_hat[j] -= mf[j];
  }
  return project_pointwise(basis_values_at(basis, x, t), est.v_hat, cfg.lambda);
}

// State- and time-dependent field: every row is projected independently.
// Times are clamped to 1 - eps; with the default integrator grid the final
// Euler step therefore extrapolates with the last computed velocity.
inline VelocityField make_dynamic_field(std::shared_ptr<const BasisSet> basis, Dataset shots,
                                        const DynamicConfig& cfg = {}) {
  if (shots.count() == 0) throw std::invalid_argument("make_dynamic_field: empty shot set");
  VelocityField field;
  field.tag = "dynamic";
  field.eval = [basis, shots, cfg](const DenseMatrix& x, double t) {
    const double tc = std::min(t, 1.0 - cfg.t_clamp_eps);
    const std::size_t n = basis->n;
    DenseMatrix out(x.rows(), n);
    std::vector<double> xi(n), z(n + 1), buf_a, buf_b, mf(n);
    DenseMatrix v_rows(basis->k, n);
    z[n] = tc;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t j = 0; j < n; ++j) {
        xi[j] = x(r, j);
        z[j] = xi[j];
      }
      ConditionalVelocityEstimate est = conditional_velocity(xi, tc, shots.samples, cfg.min_ess);
      for (std::size_t i = 0; i < basis->k; ++i)
        detail::mlp_forward_row(basis->nets[i], z.data(), buf_a, buf_b, v_rows.row(i));
      if (basis->mean_field) {
        detail::mlp_forward_row(*basis->mean_field, z.data(), buf_a, buf_b, mf.data());
        for (std::size_t j = 0; j < n; ++j) est.v_hat[j] -= mf[j];
      }
      const std::vector<double> c = project_pointwise(v_rows, est.v_hat, cfg.lambda);
      for (std::size_t j = 0; j < n; ++j) {
        double s = basis->mean_field ? mf[j] : 0.0;
        for (std::size_t i = 0; i < basis->k; ++i) s += c[i] * v_rows(i, j);
        out(r, j) = s;
      }
    }
    return out;
  };
  return field;
}

// Training loop for the dynamic variant: anchors are state-times from the
// interpolation batch, targets come from the importance-sampling estimator,
// and each anchor contributes a pointwise projection loss.
inline BasisSet train_dynamic(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                              const DynamicConfig& dcfg, TrainLog* log = nullptr) {
  if (datasets.size() < 2)
    throw std::invalid_argument("train_dynamic requires at least 2 training distributions");
  const std::size_t n = datasets.front().dim();
  Rng root(cfg.seed);
  BasisSet basis = make_basis(cfg.k, n, cfg, root.split("basis-init"));

  std::vector<DenseMatrix*> params = detail::basis_params(basis);
  AdamState adam = make_adam_state(params, cfg.lr);
  BasisGrads grads = make_zero_basis_grads(basis);

  const std::size_t n_anchor = std::max<std::size_t>(1, dcfg.anchor_subsample);
  for (std::size_t step = 0; step < cfg.gradient_steps; ++step) {
    Rng step_rng = root.split("step", step);
    const std::vector<std::size_t> dists =
        detail::pick_dists(datasets.size(), cfg.dist_minibatch, step_rng);
    detail::zero_basis_grads(grads);
    double loss = 0.0;
    for (std::size_t d : dists) {
      Rng batch_rng = step_rng.split("dist", d);
      PathBatch pb = make_path_batch(datasets[d], cfg.batch_size, batch_rng);
      const std::size_t a_count = std::min(n_anchor, pb.count());
      std::vector<std::size_t> anchor_idx =
          detail::pick_dists(pb.count(), a_count, batch_rng);

      // anchor states, times clamped to where the estimator is defined
      DenseMatrix za(a_count, n + 1);
      std::vector<double> ta(a_count);
      for (std::size_t a = 0; a < a_count; ++a) {
        const std::size_t s = anchor_idx[a];
        for (std::size_t j = 0; j < n; ++j) za(a, j) = pb.xt(s, j);
        ta[a] = std::min(pb.t[s], 1.0 - dcfg.t_clamp_eps);
        za(a, n) = ta[a];
      }

      std::vector<MlpTrace> traces(basis.k);
      std::vector<const DenseMatrix*> values(basis.k);
      for (std::size_t i = 0; i < basis.k; ++i)
        values[i] = &mlp_forward_trace(basis.nets[i], za, traces[i]);
      MlpTrace mean_trace;
      DenseMatrix mean_values;
      if (basis.mean_field)
        mean_values = mlp_forward_trace(*basis.mean_field, za, mean_trace);

      const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(a_count));
      std::vector<DenseMatrix> upstream(basis.k, DenseMatrix(a_count, n));
      DenseMatrix mean_upstream(a_count, n);
      DenseMatrix v_rows(basis.k, n);
      std::vector<double> xi(n);
      double dist_loss = 0.0;
      for (std::size_t a = 0; a < a_count; ++a) {
        for (std::size_t j = 0; j < n; ++j) xi[j] = za(a, j);
        ConditionalVelocityEstimate est =
            conditional_velocity(xi, ta[a], pb.x1, dcfg.min_ess);
        if (basis.mean_field)
          for (std::size_t j = 0; j < n; ++j) est.v_hat[j] -= mean_values(a, j);
        for (std::size_t i = 0; i < basis.k; ++i)
          for (std::size_t j = 0; j < n; ++j) v_rows(i, j) = (*values[i])(a, j);
        const std::vector<double> c = project_pointwise(v_rows, est.v_hat, cfg.lambda);

        std::vector<double> r(n), p(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < basis.k; ++i) s += c[i] * v_rows(i, j);
          r[j] = est.v_hat[j] - s;
          dist_loss += scale * r[j] * r[j];
        }
        std::vector<double> q(basis.k, 0.0);
        if (!cfg.detach_coefficients && cfg.lambda > 0.0) {
          DenseMatrix g = matmul_nt(v_rows, v_rows);
          g *= 1.0 / static_cast<double>(n);
          q = solve_ridge(g, c, cfg.lambda);
          for (std::size_t i = 0; i < basis.k; ++i) q[i] *= cfg.lambda;
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < basis.k; ++i) p[j] += q[i] * v_rows(i, j);
        }
        for (std::size_t i = 0; i < basis.k; ++i)
          for (std::size_t j = 0; j < n; ++j)
            upstream[i](a, j) = 2.0 * scale * (c[i] * (p[j] - r[j]) - q[i] * r[j]);
        if (basis.mean_field)
          for (std::size_t j = 0; j < n; ++j)
            mean_upstream(a, j) = 2.0 * scale * (p[j] - r[j]);
      }
      if (!std::isfinite(dist_loss))
        throw TrainingDivergedError(step, d, "non-finite dynamic loss");
      loss += dist_loss;
      for (std::size_t i = 0; i < basis.k; ++i)
        mlp_backward_accumulate(basis.nets[i], traces[i], upstream[i], grads.nets[i]);
      if (basis.mean_field)
        mlp_backward_accumulate(*basis.mean_field, mean_trace, mean_upstream,
                                *grads.mean_field);
    }
    adam_step(params, detail::basis_grad_list(grads), adam);
    if (log) log->loss.push_back(loss);
  }
  return basis;
}

}  // namespace fpfm
