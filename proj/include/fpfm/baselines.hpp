#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpfm/adam.hpp"
#include "fpfm/basis.hpp"
#include "fpfm/datasets.hpp"
#include "fpfm/flow.hpp"
#include "fpfm/matrix.hpp"
#include "fpfm/mlp.hpp"
#include "fpfm/rng.hpp"
#include "fpfm/sampler.hpp"

namespace fpfm {

// Scalar conditioning variable: the arc center angle for training arcs, the
// circular mean of the component angles for mixtures, 0 for unseen support.
struct ConditioningCode {
  double value = 0.0;
};

struct Classifier {
  Mlp net;  // (x, t) -> logit
};

struct GuidanceConfig {
  double alpha = 5.0;
};

inline VelocityField make_mlp_field(Mlp net, std::string tag) {
  VelocityField f;
  f.tag = std::move(tag);
  f.eval = [net = std::move(net)](const DenseMatrix& x, double t) {
    return mlp_forward(net, augment_time(x, t));
  };
  return f;
}

inline VelocityField make_conditional_field(Mlp net, ConditioningCode code) {
  VelocityField f;
  f.tag = "conditional";
  f.eval = [net = std::move(net), code](const DenseMatrix& x, double t) {
    DenseMatrix z(x.rows(), x.cols() + 2);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) z(i, j) = x(i, j);
      z(i, x.cols()) = t;
      z(i, x.cols() + 1) = code.value;
    }
    return mlp_forward(net, z);
  };
  return f;
}

namespace detail {

inline std::vector<std::size_t> flow_mlp_dims(std::size_t in_dim, std::size_t out_dim,
                                              const TrainConfig& cfg) {
  std::vector<std::size_t> dims;
  dims.push_back(in_dim);
  for (std::size_t d = 0; d < cfg.depth; ++d) dims.push_back(cfg.width);
  dims.push_back(out_dim);
  return dims;
}

// One flow-matching regression step on a prepared input batch z and target u.
inline double flow_step(Mlp& net, const DenseMatrix& z, const DenseMatrix& u,
                        std::vector<DenseMatrix*>& params, AdamState& adam) {
  const double scale =
      1.0 / (static_cast<double>(u.cols()) * static_cast<double>(u.rows()));
  MlpTrace trace;
  const DenseMatrix& out = mlp_forward_trace(net, z, trace);
  DenseMatrix diff = out;
  diff -= u;
  const double loss = scale * squared_norm(diff);
  diff *= 2.0 * scale;
  MlpGrads grads = make_zero_grads(net);
  mlp_backward_accumulate(net, trace, diff, grads);
  adam_step(params, mlp_grad_list(grads), adam);
  return loss;
}

inline Dataset pool_datasets(const std::vector<Dataset>& datasets) {
  if (datasets.empty()) throw std::invalid_argument("no datasets to pool");
  std::size_t total = 0;
  for (const Dataset& d : datasets) total += d.count();
  Dataset pooled;
  pooled.samples = DenseMatrix(total, datasets.front().dim());
  std::size_t row = 0;
  for (const Dataset& d : datasets)
    for (std::size_t i = 0; i < d.count(); ++i, ++row)
      for (std::size_t j = 0; j < d.dim(); ++j) pooled.samples(row, j) = d.samples(i, j);
  pooled.provenance = "pooled";
  return pooled;
}

// Continues flow-matching training of an existing net on one dataset.
inline double train_flow_steps(Mlp& net, const Dataset& data, std::size_t steps,
                               std::size_t batch, double lr, Rng root, TrainLog* log) {
  std::vector<DenseMatrix*> params = mlp_params(net);
  AdamState adam = make_adam_state(params, lr);
  double last = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    Rng rng = root.split("step", step);
    PathBatch pb = make_path_batch(data, batch, rng);
    last = flow_step(net, augment_time(pb.xt, pb.t), pb.u, params, adam);
    if (!std::isfinite(last)) throw TrainingDivergedError(step, 0, "non-finite flow loss");
    if (log) log->loss.push_back(last);
  }
  return last;
}

}  // namespace detail

// Standard flow matching on the pooled training data.
inline Mlp train_unconditional(const std::vector<Dataset>& datasets, const TrainConfig& cfg,
                               TrainLog* log = nullptr) {
  if (datasets.empty()) throw std::invalid_argument("train_unconditional: no datasets");
  const std::size_t n = datasets.front().dim();
  Rng root(cfg.seed);
  Rng init = root.split("uncond-init");
  Mlp net = make_mlp(detail::flow_mlp_dims(n + 1, n, cfg), cfg.activation, init);
  detail::train_flow_steps(net, detail::pool_datasets(datasets), cfg.gradient_steps,
                           cfg.batch_size, cfg.lr, root.split("uncond"), log);
  return net;
}

// Flow matching with the conditioning code appended to the input; one loss
// term per distribution per step, like the basis training loops.
inline Mlp train_conditional(const std::vector<Dataset>& datasets,
                             const std::vector<ConditioningCode>& codes, const TrainConfig& cfg,
                             TrainLog* log = nullptr) {
  if (datasets.empty()) throw std::invalid_argument("train_conditional: no datasets");
  if (codes.size() != datasets.size())
    throw std::invalid_argument("train_conditional: one conditioning code per dataset required");
  const std::size_t n = datasets.front().dim();
  Rng root(cfg.seed);
  Rng init = root.split("cond-init");
  Mlp net = make_mlp(detail::flow_mlp_dims(n + 2, n, cfg), cfg.activation, init);
  std::vector<DenseMatrix*> params = mlp_params(net);
  AdamState adam = make_adam_state(params, cfg.lr);
  for (std::size_t step = 0; step < cfg.gradient_steps; ++step) {
    Rng step_rng = root.split("step", step);
    double loss = 0.0;
    MlpGrads grads = make_zero_grads(net);
    for (std::size_t d = 0; d < datasets.size(); ++d) {
      Rng rng = step_rng.split("dist", d);
      PathBatch pb = make_path_batch(datasets[d], cfg.batch_size, rng);
      DenseMatrix z(pb.count(), n + 2);
      for (std::size_t i = 0; i < pb.count(); ++i) {
        for (std::size_t j = 0; j < n; ++j) z(i, j) = pb.xt(i, j);
        z(i, n) = pb.t[i];
        z(i, n + 1) = codes[d].value;
      }
      const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(pb.count()));
      MlpTrace trace;
      DenseMatrix diff = mlp_forward_trace(net, z, trace);
      diff -= pb.u;
      loss += scale * squared_norm(diff);
      diff *= 2.0 * scale;
      mlp_backward_accumulate(net, trace, diff, grads);
    }
    if (!std::isfinite(loss)) throw TrainingDivergedError(step, 0, "non-finite conditional loss");
    adam_step(params, mlp_grad_list(grads), adam);
    if (log) log->loss.push_back(loss);
  }
  return net;
}

// Binary cross-entropy on interpolation states: positives from the target's
// path distribution, negatives from the pooled other distributions.
inline Classifier train_classifier(const Dataset& target, const std::vector<Dataset>& negatives,
                                   const TrainConfig& cfg, TrainLog* log = nullptr) {
  if (target.count() == 0) throw std::invalid_argument("train_classifier: empty target");
  if (negatives.empty()) throw std::invalid_argument("train_classifier: no negatives");
  const std::size_t n = target.dim();
  Rng root(cfg.seed);
  Rng init = root.split("clf-init");
  Classifier clf{make_mlp(detail::flow_mlp_dims(n + 1, 1, cfg), cfg.activation, init)};
  const Dataset pooled_neg = detail::pool_datasets(negatives);
  std::vector<DenseMatrix*> params = mlp_params(clf.net);
  AdamState adam = make_adam_state(params, cfg.lr);
  const std::size_t half = std::max<std::size_t>(1, cfg.batch_size / 2);
  for (std::size_t step = 0; step < cfg.gradient_steps; ++step) {
    Rng rng = root.split("step", step);
    PathBatch pos = make_path_batch(target, half, rng);
    PathBatch neg = make_path_batch(pooled_neg, half, rng);
    DenseMatrix z(2 * half, n + 1);
    for (std::size_t i = 0; i < half; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        z(i, j) = pos.xt(i, j);
        z(half + i, j) = neg.xt(i, j);
      }
      z(i, n) = pos.t[i];
      z(half + i, n) = neg.t[i];
    }
    MlpTrace trace;
    const DenseMatrix& logits = mlp_forward_trace(clf.net, z, trace);
    const double scale = 1.0 / static_cast<double>(2 * half);
    double loss = 0.0;
    DenseMatrix upstream(2 * half, 1);
    for (std::size_t i = 0; i < 2 * half; ++i) {
      const double l = logits(i, 0);
      const double y = i < half ? 1.0 : 0.0;
      // softplus(-l) for positives, softplus(l) for negatives, stably
      const double sp = l > 0 ? l + std::log1p(std::exp(-l)) : std::log1p(std::exp(l));
      loss += scale * (sp - y * l);
      const double sigma = 1.0 / (1.0 + std::exp(-l));
      upstream(i, 0) = scale * (sigma - y);
    }
    if (!std::isfinite(loss)) throw TrainingDivergedError(step, 0, "non-finite classifier loss");
    MlpGrads grads = make_zero_grads(clf.net);
    mlp_backward_accumulate(clf.net, trace, upstream, grads);
    adam_step(params, mlp_grad_list(grads), adam);
    if (log) log->loss.push_back(loss);
  }
  return clf;
}

// v(x,t) = base(x,t) + alpha * grad_x log sigmoid(logit(x,t)).
inline VelocityField classifier_guided_field(VelocityField base, Classifier clf,
                                             const GuidanceConfig& gcfg) {
  if (gcfg.alpha < 0.0) throw std::invalid_argument("guidance alpha must be >= 0");
  VelocityField f;
  f.tag = "classifier_guided";
  f.eval = [base, clf, gcfg](const DenseMatrix& x, double t) {
    DenseMatrix out = base(x, t);
    if (gcfg.alpha == 0.0) return out;
    const DenseMatrix z = augment_time(x, t);
    MlpTrace trace;
    const DenseMatrix& logits = mlp_forward_trace(clf.net, z, trace);
    DenseMatrix upstream(x.rows(), 1);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      const double l = logits(i, 0);
      // d/dl log sigmoid(l) = sigmoid(-l)
      upstream(i, 0) = gcfg.alpha / (1.0 + std::exp(l));
    }
    MlpGrads grads = make_zero_grads(clf.net);
    const DenseMatrix input_grads =
        mlp_backward_accumulate(clf.net, trace, upstream, grads);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += input_grads(i, j);
    return out;
  };
  return f;
}

struct DistributionGuidedModel {
  Mlp secondary;           // noise -> recovered initial states of the base model
  DenseMatrix recovered;   // the backward-integrated initial states
};

// Backward-integrates the target through the base field to label the noise
// states that generate it, then fits a second flow model to those labels.
inline DistributionGuidedModel train_distribution_guided(const VelocityField& base,
                                                         std::size_t base_dim,
                                                         const Dataset& target,
                                                         const TrainConfig& cfg,
                                                         std::size_t backward_steps = 1000,
                                                         TrainLog* log = nullptr) {
  if (target.count() == 0) throw std::invalid_argument("distribution_guided: empty target");
  DistributionGuidedModel model;
  model.recovered =
      integrate_backward(base, target.samples, IntegratorConfig{backward_steps, 1.0});
  Dataset labels;
  labels.samples = model.recovered;
  labels.provenance = "recovered-initial-states";
  Rng root(cfg.seed);
  Rng init = root.split("distguided-init");
  model.secondary = make_mlp(detail::flow_mlp_dims(base_dim + 1, base_dim, cfg),
                             cfg.activation, init);
  detail::train_flow_steps(model.secondary, labels, cfg.gradient_steps, cfg.batch_size, cfg.lr,
                           root.split("distguided"), log);
  return model;
}

// Composed generation: secondary flow first, then the base model.
inline Sampler make_distribution_guided_sampler(VelocityField base,
                                                const DistributionGuidedModel& model,
                                                std::size_t dim) {
  VelocityField secondary = make_mlp_field(model.secondary, "distribution_guided_secondary");
  Sampler s;
  s.tag = "distribution_guided";
  s.generate = [base, secondary, dim](std::size_t m, Rng rng, const IntegratorConfig& cfg) {
    DenseMatrix x = sample_noise(m, dim, rng);
    x = integrate(secondary, x, cfg);
    return integrate(base, x, cfg);
  };
  return s;
}

// Copies the base net and continues standard flow matching on the target.
inline Mlp finetune(const Mlp& base, const Dataset& target, const TrainConfig& cfg,
                    TrainLog* log = nullptr) {
  if (target.count() == 0) throw std::invalid_argument("finetune: empty target");
  Mlp net = base;
  if (cfg.gradient_steps > 0)
    detail::train_flow_steps(net, target, cfg.gradient_steps, cfg.batch_size, cfg.lr,
                             Rng(cfg.seed).split("finetune"), log);
  return net;
}

// Circular mean of the sample angles; the conditioning rule applied to a raw
// shot set when the split structure is unknown.
inline ConditioningCode code_from_samples(const DenseMatrix& samples) {
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const double a = std::atan2(samples(i, 1), samples(i, 0));
    sx += std::cos(a);
    sy += std::sin(a);
  }
  if (sx == 0.0 && sy == 0.0) return {0.0};
  return {std::atan2(sy, sx)};
}

inline ConditioningCode code_for_mixture(const MixtureSpec& spec) {
  const double sx = std::cos(spec.a.center_angle) + std::cos(spec.b.center_angle);
  const double sy = std::sin(spec.a.center_angle) + std::sin(spec.b.center_angle);
  if (std::abs(sx) < 1e-12 && std::abs(sy) < 1e-12) return {0.0};
  return {std::atan2(sy, sx)};
}

}  // namespace fpfm
