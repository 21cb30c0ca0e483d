#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpfm/adam.hpp"
#include "fpfm/datasets.hpp"
#include "fpfm/flow.hpp"
#include "fpfm/linalg.hpp"
#include "fpfm/matrix.hpp"
#include "fpfm/mlp.hpp"
#include "fpfm/rng.hpp"

namespace fpfm {

struct TrainingDivergedError : std::runtime_error {
  std::size_t step;
  std::size_t dist;
  TrainingDivergedError(std::size_t step_, std::size_t dist_, const std::string& what_)
      : std::runtime_error("training diverged at step " + std::to_string(step_) +
                           ", distribution " + std::to_string(dist_) + ": " + what_),
        step(step_),
        dist(dist_) {}
};

// k velocity-field basis networks g^i: (x, t) -> R^n, with an optional mean
// field for residual mode.
struct BasisSet {
  std::size_t k = 0;
  std::size_t n = 0;
  std::vector<Mlp> nets;
  std::optional<Mlp> mean_field;
};

struct GramSystem {
  DenseMatrix g;          // k x k
  std::vector<double> b;  // k
  std::size_t sample_count = 0;
  double lambda = 0.0;
};

enum class CoeffMode { Static, Temporal };

struct CoefficientVector {
  std::vector<double> c;
  CoeffMode mode = CoeffMode::Static;
  double t = 0.0;  // meaningful in temporal mode
  std::string source;
};

struct TrainConfig {
  std::size_t gradient_steps = 1000;
  std::size_t batch_size = 512;
  double lr = 1e-3;
  double lambda = 1e-6;
  std::size_t k = 100;
  std::size_t width = 64;
  std::size_t depth = 3;  // hidden layers
  Activation activation = Activation::Tanh;
  std::uint64_t seed = 0;
  bool residual_mode = false;
  bool detach_coefficients = false;
  std::size_t dist_minibatch = 8;  // distributions per gradient step
};

struct TrainLog {
  std::vector<double> loss;  // one entry per gradient step
};

// [x | t] with the time appended as an extra input coordinate.
inline DenseMatrix augment_time(const DenseMatrix& x, const std::vector<double>& t) {
  if (t.size() != x.rows()) throw ShapeError("augment_time: t length mismatch");
  DenseMatrix z(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) z(i, j) = x(i, j);
    z(i, x.cols()) = t[i];
  }
  return z;
}

inline DenseMatrix augment_time(const DenseMatrix& x, double t) {
  return augment_time(x, std::vector<double>(x.rows(), t));
}

inline BasisSet make_basis(std::size_t k, std::size_t n, const TrainConfig& cfg, Rng init_rng) {
  if (k < 1) throw std::invalid_argument("make_basis: k must be >= 1");
  BasisSet basis;
  basis.k = k;
  basis.n = n;
  std::vector<std::size_t> dims;
  dims.push_back(n + 1);
  for (std::size_t d = 0; d < cfg.depth; ++d) dims.push_back(cfg.width);
  dims.push_back(n);
  for (std::size_t i = 0; i < k; ++i) {
    Rng r = init_rng.split(i);
    basis.nets.push_back(make_mlp(dims, cfg.activation, r));
  }
  if (cfg.residual_mode) {
    Rng r = init_rng.split("mean-field");
    basis.mean_field = make_mlp(dims, cfg.activation, r);
  }
  return basis;
}

// Evaluates every basis net on the augmented batch.
inline std::vector<DenseMatrix> basis_forward(const BasisSet& basis, const DenseMatrix& z) {
  std::vector<DenseMatrix> values;
  values.reserve(basis.k);
  for (const Mlp& net : basis.nets) values.push_back(mlp_forward(net, z));
  return values;
}

// Monte-Carlo Gram matrix and right-hand side under the path distribution:
//   G[i][j] = (1/(n m)) sum_s g_i(z_s) . g_j(z_s)
//   b[i]    = (1/(n m)) sum_s u_s . g_i(z_s)
// In residual mode the mean field's output is subtracted from u first.
// restrict_t asserts the batch sits at one fixed time (temporal mode).
inline GramSystem estimate_gram_rhs(const BasisSet& basis, const PathBatch& pb,
                                    std::optional<double> restrict_t = std::nullopt,
                                    double lambda = 0.0) {
  if (pb.count() == 0) throw std::invalid_argument("estimate_gram_rhs: empty batch");
  if (restrict_t) {
    for (double t : pb.t)
      if (t != *restrict_t)
        throw std::invalid_argument("estimate_gram_rhs: batch times differ from restrict_t");
  }
  const std::size_t m = pb.count();
  const std::size_t n = pb.dim();
  const DenseMatrix z = augment_time(pb.xt, pb.t);
  const std::vector<DenseMatrix> values = basis_forward(basis, z);

  DenseMatrix u_eff = pb.u;
  if (basis.mean_field) u_eff -= mlp_forward(*basis.mean_field, z);

  const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(m));
  GramSystem gs;
  gs.g = DenseMatrix(basis.k, basis.k);
  gs.b.resize(basis.k);
  gs.sample_count = m;
  gs.lambda = lambda;
  for (std::size_t i = 0; i < basis.k; ++i) {
    for (std::size_t j = i; j < basis.k; ++j) {
      const double v = scale * frobenius_dot(values[i], values[j]);
      gs.g(i, j) = v;
      gs.g(j, i) = v;
    }
    gs.b[i] = scale * frobenius_dot(u_eff, values[i]);
  }
  return gs;
}

inline CoefficientVector project_static(const BasisSet& basis, const Dataset& dataset,
                                        std::size_t m_eval, Rng rng, double lambda = 1e-6) {
  if (dataset.count() < 1) throw std::invalid_argument("project_static: empty dataset");
  PathBatch pb = make_path_batch(dataset, m_eval, rng);
  GramSystem gs = estimate_gram_rhs(basis, pb, std::nullopt, lambda);
  CoefficientVector cv;
  cv.c = solve_ridge(gs.g, gs.b, lambda);
  cv.mode = CoeffMode::Static;
  cv.source = dataset.provenance;
  return cv;
}

inline CoefficientVector project_temporal(const BasisSet& basis, const Dataset& dataset, double t,
                                          std::size_t m_eval, Rng rng, double lambda = 1e-6) {
  if (!(t >= 0.0 && t < 1.0))
    throw std::domain_error("project_temporal: t must satisfy 0 <= t < 1");
  PathBatch pb = make_path_batch(dataset, m_eval, rng, t);
  GramSystem gs = estimate_gram_rhs(basis, pb, t, lambda);
  CoefficientVector cv;
  cv.c = solve_ridge(gs.g, gs.b, lambda);
  cv.mode = CoeffMode::Temporal;
  cv.t = t;
  cv.source = dataset.provenance;
  return cv;
}

// v(x,t) = [mean_field(x,t) +] sum_i c_i g_i(x,t) with fixed coefficients.
inline VelocityField make_static_field(std::shared_ptr<const BasisSet> basis,
                                       CoefficientVector coeffs) {
  if (coeffs.c.size() != basis->k)
    throw ShapeError("make_static_field: coefficient count does not match basis");
  VelocityField field;
  field.tag = "static";
  field.eval = [basis, coeffs](const DenseMatrix& x, double t) {
    const DenseMatrix z = augment_time(x, t);
    DenseMatrix out(x.rows(), basis->n);
    if (basis->mean_field) out = mlp_forward(*basis->mean_field, z);
    for (std::size_t i = 0; i < basis->k; ++i) {
      if (coeffs.c[i] == 0.0) continue;
      DenseMatrix gi = mlp_forward(basis->nets[i], z);
      gi *= coeffs.c[i];
      out += gi;
    }
    return out;
  };
  return field;
}

// Temporal variant: coefficients are recomputed from the shot set once per
// queried time (i.e. once per integrator step) and shared across the batch.
inline VelocityField make_temporal_field(std::shared_ptr<const BasisSet> basis, Dataset shots,
                                         std::size_t m_eval, double lambda,
                                         std::uint64_t stream_key) {
  VelocityField field;
  field.tag = "temporal";
  field.eval = [basis, shots, m_eval, lambda, stream_key](const DenseMatrix& x, double t) {
    std::uint64_t t_bits;
    static_assert(sizeof(double) == sizeof(std::uint64_t));
    std::memcpy(&t_bits, &t, sizeof(t));
    Rng rng = Rng(stream_key).split(t_bits);
    const double tc = std::min(t, 1.0 - 1e-9);
    const CoefficientVector cv = project_temporal(*basis, shots, tc, m_eval, rng, lambda);
    const DenseMatrix z = augment_time(x, t);
    DenseMatrix out(x.rows(), basis->n);
    if (basis->mean_field) out = mlp_forward(*basis->mean_field, z);
    for (std::size_t i = 0; i < basis->k; ++i) {
      DenseMatrix gi = mlp_forward(basis->nets[i], z);
      gi *= cv.c[i];
      out += gi;
    }
    return out;
  };
  return field;
}

struct BasisGrads {
  std::vector<MlpGrads> nets;
  std::optional<MlpGrads> mean_field;
};

inline BasisGrads make_zero_basis_grads(const BasisSet& basis) {
  BasisGrads g;
  for (const Mlp& net : basis.nets) g.nets.push_back(make_zero_grads(net));
  if (basis.mean_field) g.mean_field = make_zero_grads(*basis.mean_field);
  return g;
}

namespace detail {

// Loss and parameter gradients of the projection objective on one batch:
//   L = (1/(n m)) sum_s || u_s - V_s c ||^2,   c = (G + lambda I)^{-1} b.
// Unless detached, gradients flow through G, b and the solve via
//   dc = (G + lambda I)^{-1} (db - dG c),
// which after substitution reduces to the q-vector form below with
//   q = lambda (G + lambda I)^{-1} c   (exactly 0 when lambda = 0).
inline double accumulate_projection_loss(const BasisSet& basis, const PathBatch& pb,
                                         std::optional<double> restrict_t, double lambda,
                                         bool detach, BasisGrads& grads,
                                         std::vector<double>* coeffs_out = nullptr) {
  const std::size_t m = pb.count();
  const std::size_t n = pb.dim();
  const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(m));
  const DenseMatrix z = augment_time(pb.xt, pb.t);
  if (restrict_t) {
    for (double t : pb.t)
      if (t != *restrict_t)
        throw std::invalid_argument("projection loss: batch times differ from restrict_t");
  }

  std::vector<MlpTrace> traces(basis.k);
  std::vector<const DenseMatrix*> values(basis.k);
  for (std::size_t i = 0; i < basis.k; ++i)
    values[i] = &mlp_forward_trace(basis.nets[i], z, traces[i]);

  MlpTrace mean_trace;
  DenseMatrix u_eff = pb.u;
  if (basis.mean_field)
    u_eff -= mlp_forward_trace(*basis.mean_field, z, mean_trace);

  DenseMatrix g(basis.k, basis.k);
  std::vector<double> b(basis.k);
  for (std::size_t i = 0; i < basis.k; ++i) {
    for (std::size_t j = i; j < basis.k; ++j) {
      const double v = scale * frobenius_dot(*values[i], *values[j]);
      g(i, j) = v;
      g(j, i) = v;
    }
    b[i] = scale * frobenius_dot(u_eff, *values[i]);
  }
  const std::vector<double> c = solve_ridge(g, b, lambda);
  if (coeffs_out) *coeffs_out = c;

  // residual R = u_eff - sum_i c_i V_i
  DenseMatrix residual = u_eff;
  for (std::size_t i = 0; i < basis.k; ++i) {
    const double ci = c[i];
    if (ci == 0.0) continue;
    const double* vi = values[i]->data();
    double* r = residual.data();
    for (std::size_t s = 0; s < residual.size(); ++s) r[s] -= ci * vi[s];
  }
  const double loss = scale * squared_norm(residual);

  std::vector<double> q(basis.k, 0.0);
  if (!detach && lambda > 0.0) {
    q = solve_ridge(g, c, lambda);
    for (double& v : q) v *= lambda;
  }
  // P = sum_i q_i V_i
  DenseMatrix p(m, n);
  if (!detach && lambda > 0.0) {
    for (std::size_t i = 0; i < basis.k; ++i) {
      if (q[i] == 0.0) continue;
      const double* vi = values[i]->data();
      double* pd = p.data();
      for (std::size_t s = 0; s < p.size(); ++s) pd[s] += q[i] * vi[s];
    }
  }

  // dL/dV_i = 2*scale * ( c_i (P - R) - q_i R )
  DenseMatrix upstream(m, n);
  for (std::size_t i = 0; i < basis.k; ++i) {
    const double ci = 2.0 * scale * c[i];
    const double qi = 2.0 * scale * q[i];
    const double* pd = p.data();
    const double* rd = residual.data();
    double* up = upstream.data();
    for (std::size_t s = 0; s < upstream.size(); ++s) up[s] = ci * (pd[s] - rd[s]) - qi * rd[s];
    mlp_backward_accumulate(basis.nets[i], traces[i], upstream, grads.nets[i]);
  }
  if (basis.mean_field) {
    // dL/d mean_field = 2*scale * (P - R)
    DenseMatrix up(m, n);
    const double* pd = p.data();
    const double* rd = residual.data();
    for (std::size_t s = 0; s < up.size(); ++s) up.data()[s] = 2.0 * scale * (pd[s] - rd[s]);
    mlp_backward_accumulate(*basis.mean_field, mean_trace, up, *grads.mean_field);
  }
  return loss;
}

inline std::vector<DenseMatrix*> basis_params(BasisSet& basis) {
  std::vector<DenseMatrix*> params;
  for (Mlp& net : basis.nets)
    for (DenseMatrix* p : mlp_params(net)) params.push_back(p);
  if (basis.mean_field)
    for (DenseMatrix* p : mlp_params(*basis.mean_field)) params.push_back(p);
  return params;
}

inline std::vector<const DenseMatrix*> basis_grad_list(const BasisGrads& grads) {
  std::vector<const DenseMatrix*> list;
  for (const MlpGrads& g : grads.nets)
    for (const DenseMatrix* p : mlp_grad_list(g)) list.push_back(p);
  if (grads.mean_field)
    for (const DenseMatrix* p : mlp_grad_list(*grads.mean_field)) list.push_back(p);
  return list;
}

inline void zero_basis_grads(BasisGrads& grads) {
  for (MlpGrads& g : grads.nets) {
    for (DenseMatrix& w : g.weights) w.fill(0.0);
    for (DenseMatrix& b : g.biases) b.fill(0.0);
  }
  if (grads.mean_field) {
    for (DenseMatrix& w : grads.mean_field->weights) w.fill(0.0);
    for (DenseMatrix& b : grads.mean_field->biases) b.fill(0.0);
  }
}

// Random subset of distribution indices for one step (all of them when the
// family is small enough).
inline std::vector<std::size_t> pick_dists(std::size_t total, std::size_t want, Rng& rng) {
  std::vector<std::size_t> idx(total);
  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  if (want == 0 || want >= total) return idx;
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t j = i + rng.index(total - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(want);
  return idx;
}

enum class TimeSampling { PerSample, SharedPerDistribution };

inline BasisSet train_basis(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                            TimeSampling time_mode, TrainLog* log) {
  if (datasets.size() < 2)
    throw std::invalid_argument("basis training requires at least 2 training distributions");
  const std::size_t n = datasets.front().dim();
  Rng root(cfg.seed);
  BasisSet basis = make_basis(cfg.k, n, cfg, root.split("basis-init"));

  std::vector<DenseMatrix*> params = basis_params(basis);
  AdamState adam = make_adam_state(params, cfg.lr);
  BasisGrads grads = make_zero_basis_grads(basis);

  for (std::size_t step = 0; step < cfg.gradient_steps; ++step) {
    Rng step_rng = root.split("step", step);
    const std::vector<std::size_t> dists =
        pick_dists(datasets.size(), cfg.dist_minibatch, step_rng);
    zero_basis_grads(grads);
    double loss = 0.0;
    for (std::size_t d : dists) {
      Rng batch_rng = step_rng.split("dist", d);
      std::optional<double> shared_t;
      if (time_mode == TimeSampling::SharedPerDistribution) shared_t = batch_rng.uniform();
      PathBatch pb = make_path_batch(datasets[d], cfg.batch_size, batch_rng, shared_t);
      const double l = accumulate_projection_loss(basis, pb, shared_t, cfg.lambda,
                                                  cfg.detach_coefficients, grads);
      if (!std::isfinite(l)) throw TrainingDivergedError(step, d, "non-finite loss");
      loss += l;
    }
    adam_step(params, basis_grad_list(grads), adam);
    if (log) log->loss.push_back(loss);
  }
  return basis;
}

}  // namespace detail

// Algorithm: accumulate the projection loss over the training distributions
// with per-sample times, one optimizer step per pass.
inline BasisSet train_static(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                             TrainLog* log = nullptr) {
  return detail::train_basis(datasets, cfg, detail::TimeSampling::PerSample, log);
}

// Same loop but each distribution's batch shares a single time per step and
// the projection uses the fixed-time inner product.
inline BasisSet train_temporal(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                               TrainLog* log = nullptr) {
  return detail::train_basis(datasets, cfg, detail::TimeSampling::SharedPerDistribution, log);
}

// Pairwise distances between the static coefficient vectors of the training
// distributions; a diagnostic for representation collisions.
inline DenseMatrix coefficient_distances(const BasisSet& basis,
                                         const std::vector<Dataset>& datasets,
                                         std::size_t m_eval, Rng rng, double lambda = 1e-6) {
  std::vector<std::vector<double>> cs;
  for (std::size_t d = 0; d < datasets.size(); ++d)
    cs.push_back(project_static(basis, datasets[d], m_eval, rng.split(d), lambda).c);
  DenseMatrix dist(datasets.size(), datasets.size());
  for (std::size_t a = 0; a < cs.size(); ++a)
    for (std::size_t b = 0; b < cs.size(); ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < cs[a].size(); ++i) {
        const double d2 = cs[a][i] - cs[b][i];
        s += d2 * d2;
      }
      dist(a, b) = std::sqrt(s);
    }
  return dist;
}

}  // namespace fpfm
