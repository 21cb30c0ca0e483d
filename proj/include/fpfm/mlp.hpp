#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpfm/math.hpp"
#include "fpfm/matrix.hpp"
#include "fpfm/rng.hpp"

namespace fpfm {

enum class Activation { Tanh, Relu };

inline std::string activation_name(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}
inline Activation activation_from_name(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation: " + s);
}

// Fully connected net, row-vector convention: y = act(x W + b) per layer,
// linear output layer. weights[l] has shape dims[l] x dims[l+1].
struct Mlp {
  std::vector<std::size_t> layer_dims;
  std::vector<DenseMatrix> weights;
  std::vector<DenseMatrix> biases;  // 1 x dims[l+1]
  Activation activation = Activation::Tanh;

  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }
};

inline Mlp make_mlp(const std::vector<std::size_t>& dims, Activation act, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least input and output dims");
  Mlp net;
  net.layer_dims = dims;
  net.activation = act;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
    // Glorot uniform
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseMatrix w(fan_in, fan_out);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.emplace_back(1, fan_out, 0.0);
  }
  return net;
}

namespace detail {
inline void apply_activation(DenseMatrix& z, Activation act) {
  if (act == Activation::Tanh) {
    fast_tanh_inplace(z.data(), z.size());
  } else {
    for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] = std::max(0.0, z.data()[i]);
  }
}
// Multiplies delta by the activation derivative, reconstructed from the
// post-activation values (valid for tanh and relu).
inline void chain_activation(DenseMatrix& delta, const DenseMatrix& post, Activation act) {
  if (act == Activation::Tanh) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double y = post.data()[i];
      delta.data()[i] *= 1.0 - y * y;
    }
  } else {
    for (std::size_t i = 0; i < delta.size(); ++i)
      if (post.data()[i] <= 0.0) delta.data()[i] = 0.0;
  }
}
}  // namespace detail

// activations[0] is the input batch; activations[l+1] the output of layer l
// (post-activation on hidden layers).
struct MlpTrace {
  std::vector<DenseMatrix> activations;
};

inline const DenseMatrix& mlp_forward_trace(const Mlp& net, const DenseMatrix& batch,
                                            MlpTrace& trace) {
  if (batch.cols() != net.input_dim())
    throw ShapeError("mlp_forward: batch has " + std::to_string(batch.cols()) +
                     " columns, net expects " + std::to_string(net.input_dim()));
  trace.activations.clear();
  trace.activations.reserve(net.layer_count() + 1);
  trace.activations.push_back(batch);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    DenseMatrix z = matmul(trace.activations.back(), net.weights[l]);
    add_row_vector(z, net.biases[l]);
    if (l + 1 < net.layer_count()) detail::apply_activation(z, net.activation);
    trace.activations.push_back(std::move(z));
  }
  return trace.activations.back();
}

inline DenseMatrix mlp_forward(const Mlp& net, const DenseMatrix& batch) {
  MlpTrace trace;
  return mlp_forward_trace(net, batch, trace);
}

struct MlpGrads {
  std::vector<DenseMatrix> weights;
  std::vector<DenseMatrix> biases;
  DenseMatrix inputs;  // m x d_in
};

inline MlpGrads make_zero_grads(const Mlp& net) {
  MlpGrads g;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    g.weights.emplace_back(net.weights[l].rows(), net.weights[l].cols());
    g.biases.emplace_back(1, net.biases[l].cols());
  }
  return g;
}

// Reverse pass from a cached forward trace: derivatives of <upstream, f(X)>.
// Parameter grads accumulate into `grads`; the return value is the input
// gradient, so several upstream batches can share one grads struct.
inline DenseMatrix mlp_backward_accumulate(const Mlp& net, const MlpTrace& trace,
                                           const DenseMatrix& upstream, MlpGrads& grads) {
  if (upstream.rows() != trace.activations.front().rows() ||
      upstream.cols() != net.output_dim())
    throw ShapeError("mlp_backward: upstream shape mismatch");
  DenseMatrix delta = upstream;
  for (std::size_t l = net.layer_count(); l-- > 0;) {
    if (l + 1 < net.layer_count())
      detail::chain_activation(delta, trace.activations[l + 1], net.activation);
    grads.weights[l] += matmul_tn(trace.activations[l], delta);
    const std::vector<double> bsum = column_sums(delta);
    for (std::size_t j = 0; j < bsum.size(); ++j) grads.biases[l](0, j) += bsum[j];
    delta = matmul_nt(delta, net.weights[l]);
  }
  return delta;
}

// One-shot convenience wrapper: forward, then reverse.
inline MlpGrads mlp_gradients(const Mlp& net, const DenseMatrix& batch,
                              const DenseMatrix& upstream) {
  MlpTrace trace;
  mlp_forward_trace(net, batch, trace);
  MlpGrads grads = make_zero_grads(net);
  grads.inputs = mlp_backward_accumulate(net, trace, upstream, grads);
  return grads;
}

inline std::vector<DenseMatrix*> mlp_params(Mlp& net) {
  std::vector<DenseMatrix*> p;
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    p.push_back(&net.weights[l]);
    p.push_back(&net.biases[l]);
  }
  return p;
}

inline std::vector<const DenseMatrix*> mlp_grad_list(const MlpGrads& g) {
  std::vector<const DenseMatrix*> p;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    p.push_back(&g.weights[l]);
    p.push_back(&g.biases[l]);
  }
  return p;
}

inline bool mlp_params_finite(const Mlp& net) {
  for (const auto& w : net.weights)
    if (!w.all_finite()) return false;
  for (const auto& b : net.biases)
    if (!b.all_finite()) return false;
  return true;
}

}  // namespace fpfm
