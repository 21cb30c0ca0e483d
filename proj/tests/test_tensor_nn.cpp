#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fpfm/adam.hpp"
#include "fpfm/flow.hpp"
#include "fpfm/linalg.hpp"
#include "fpfm/matrix.hpp"
#include "fpfm/mlp.hpp"
#include "fpfm/rng.hpp"
#include "support/oracles.hpp"

using namespace fpfm;

namespace {

double weighted_output(const Mlp& net, const DenseMatrix& batch, const DenseMatrix& upstream) {
  return frobenius_dot(upstream, mlp_forward(net, batch));
}

Mlp random_net(const std::vector<std::size_t>& dims, std::uint64_t seed) {
  Rng rng(seed);
  return make_mlp(dims, Activation::Tanh, rng);
}

}  // namespace

TEST_CASE("zero weights forward gives the bias on every row") {
  Rng rng(1);
  Mlp net = make_mlp({3, 4, 2}, Activation::Tanh, rng);
  for (auto& w : net.weights) w.fill(0.0);
  net.biases[0].fill(0.25);
  net.biases[1](0, 0) = -1.5;
  net.biases[1](0, 1) = 2.0;
  DenseMatrix batch = sample_noise(5, 3, rng);
  const DenseMatrix out = mlp_forward(net, batch);
  const double hidden = fast_tanh(0.25);
  (void)hidden;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    CHECK(out(i, 0) == out(0, 0));
    CHECK(out(i, 1) == out(0, 1));
  }
  // zero first-layer weights also kill input gradients
  DenseMatrix upstream(5, 2, 1.0);
  const MlpGrads grads = mlp_gradients(net, batch, upstream);
  for (std::size_t i = 0; i < grads.inputs.size(); ++i) CHECK(grads.inputs.data()[i] == 0.0);
}

TEST_CASE("single linear layer with identity weights reproduces the input") {
  Mlp net;
  net.layer_dims = {3, 3};
  net.weights.push_back(DenseMatrix::identity(3));
  net.biases.emplace_back(1, 3, 0.0);
  Rng rng(2);
  DenseMatrix batch = sample_noise(7, 3, rng);
  const DenseMatrix out = mlp_forward(net, batch);
  CHECK(max_abs_diff(out, batch) == 0.0);
}

TEST_CASE("one-hidden-unit tanh net matches scalar hand evaluation") {
  Mlp net;
  net.layer_dims = {1, 1, 1};
  net.weights.emplace_back(1, 1);
  net.weights.back()(0, 0) = 0.3;
  net.weights.emplace_back(1, 1);
  net.weights.back()(0, 0) = -0.7;
  net.biases.emplace_back(1, 1, 0.1);
  net.biases.emplace_back(1, 1, 0.05);
  net.activation = Activation::Tanh;
  DenseMatrix batch(3, 1);
  batch(0, 0) = -1.2;
  batch(1, 0) = 0.0;
  batch(2, 0) = 2.5;
  const DenseMatrix out = mlp_forward(net, batch);
  for (std::size_t i = 0; i < 3; ++i) {
    const double expected = -0.7 * std::tanh(0.3 * batch(i, 0) + 0.1) + 0.05;
    CHECK(std::abs(out(i, 0) - expected) < 1e-12);
  }
}

TEST_CASE("forward rejects mismatched batch width") {
  Mlp net = random_net({3, 4, 2}, 3);
  DenseMatrix bad(5, 4);
  CHECK_THROWS_AS(mlp_forward(net, bad), ShapeError);
}

TEST_CASE("parameter and input gradients match central finite differences") {
  // randomized architectures, depth <= 3, width <= 16
  Rng arch_rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> dims;
    const std::size_t depth = 1 + arch_rng.index(3);
    const std::size_t d_in = 1 + arch_rng.index(4);
    const std::size_t d_out = 1 + arch_rng.index(3);
    dims.push_back(d_in);
    for (std::size_t l = 0; l < depth; ++l) dims.push_back(2 + arch_rng.index(15));
    dims.push_back(d_out);
    Mlp net = random_net(dims, 100 + trial);
    Rng data_rng(200 + trial);
    DenseMatrix batch = sample_noise(4, d_in, data_rng);
    DenseMatrix upstream = sample_noise(4, d_out, data_rng);

    const MlpGrads grads = mlp_gradients(net, batch, upstream);
    auto f = [&]() { return weighted_output(net, batch, upstream); };

    double max_rel = 0.0;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
      for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
        const double fd = oracles::central_diff(f, net.weights[l].data()[i]);
        const double an = grads.weights[l].data()[i];
        max_rel = std::max(max_rel, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
      }
      for (std::size_t i = 0; i < net.biases[l].size(); ++i) {
        const double fd = oracles::central_diff(f, net.biases[l].data()[i]);
        const double an = grads.biases[l].data()[i];
        max_rel = std::max(max_rel, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
      }
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const double fd = oracles::central_diff(f, batch.data()[i]);
      const double an = grads.inputs.data()[i];
      max_rel = std::max(max_rel, std::abs(fd - an) / std::max(1.0, std::abs(fd)));
    }
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("pure linear layer input gradients are upstream times W transpose") {
  Mlp net;
  net.layer_dims = {3, 2};
  Rng rng(5);
  net.weights.push_back(sample_noise(3, 2, rng));
  net.biases.emplace_back(1, 2, 0.0);
  DenseMatrix batch = sample_noise(6, 3, rng);
  DenseMatrix upstream = sample_noise(6, 2, rng);
  const MlpGrads grads = mlp_gradients(net, batch, upstream);
  const DenseMatrix expected = matmul_nt(upstream, net.weights[0]);
  CHECK(max_abs_diff(grads.inputs, expected) == 0.0);
}

TEST_CASE("adam leaves parameters unchanged on zero gradients") {
  Mlp net = random_net({2, 4, 2}, 6);
  const Mlp before = net;
  std::vector<DenseMatrix*> params = mlp_params(net);
  AdamState state = make_adam_state(params, 1e-3);
  MlpGrads zero = make_zero_grads(net);
  adam_step(params, mlp_grad_list(zero), state);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    CHECK(net.weights[l] == before.weights[l]);
    CHECK(net.biases[l] == before.biases[l]);
  }
  for (const DenseMatrix& m : state.m)
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.data()[i] == 0.0);
}

TEST_CASE("adam first step moves each coordinate by at most lr") {
  Mlp net = random_net({2, 3, 1}, 7);
  const Mlp before = net;
  std::vector<DenseMatrix*> params = mlp_params(net);
  AdamState state = make_adam_state(params, 1e-3);
  Rng rng(8);
  MlpGrads grads = make_zero_grads(net);
  for (auto& w : grads.weights)
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
  for (auto& b : grads.biases)
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = rng.normal();
  adam_step(params, mlp_grad_list(grads), state);
  CHECK(state.step == 1);
  for (std::size_t l = 0; l < net.layer_count(); ++l)
    for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
      const double delta = std::abs(net.weights[l].data()[i] - before.weights[l].data()[i]);
      CHECK(delta <= 1e-3 + 1e-12);
      if (std::abs(grads.weights[l].data()[i]) > 1e-3) CHECK(delta > 0.5e-3);
    }
}

TEST_CASE("adam runs are bitwise deterministic") {
  auto run = [](std::uint64_t seed) {
    Mlp net = random_net({3, 8, 2}, seed);
    std::vector<DenseMatrix*> params = mlp_params(net);
    AdamState state = make_adam_state(params, 1e-3);
    Rng rng(seed + 1);
    for (int step = 0; step < 25; ++step) {
      DenseMatrix batch = sample_noise(16, 3, rng);
      DenseMatrix upstream = sample_noise(16, 2, rng);
      MlpGrads grads = mlp_gradients(net, batch, upstream);
      adam_step(params, mlp_grad_list(grads), state);
    }
    return net;
  };
  const Mlp a = run(11), b = run(11);
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    CHECK(a.weights[l] == b.weights[l]);
    CHECK(a.biases[l] == b.biases[l]);
  }
}

TEST_CASE("solve_ridge identity and scaling cases") {
  DenseMatrix g = DenseMatrix::identity(4);
  std::vector<double> b = {1.0, -2.0, 0.5, 3.0};
  const std::vector<double> c = solve_ridge(g, b, 0.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(c[i] == Catch::Approx(b[i]).epsilon(1e-14));

  DenseMatrix g2 = DenseMatrix::identity(4);
  g2 *= 2.0;
  const std::vector<double> c2 = solve_ridge(g2, b, 0.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(c2[i] == Catch::Approx(b[i] / 2.0).epsilon(1e-14));
}

TEST_CASE("solve_ridge matches explicit-inverse oracle on random SPD systems") {
  Rng rng(13);
  DenseMatrix a = sample_noise(8, 8, rng);
  DenseMatrix g = matmul_nt(a, a);
  for (std::size_t i = 0; i < 8; ++i) g(i, i) += 1.0;
  std::vector<double> b(8);
  for (double& v : b) v = rng.normal();
  const std::vector<double> c = solve_ridge(g, b, 0.0);
  const std::vector<double> expected = oracles::matvec(oracles::invert(g), b);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    num += (c[i] - expected[i]) * (c[i] - expected[i]);
    den += expected[i] * expected[i];
  }
  CHECK(std::sqrt(num / den) < 1e-10);
}

TEST_CASE("solve_ridge residual satisfies the contract bound") {
  Rng rng(14);
  DenseMatrix a = sample_noise(12, 12, rng);
  DenseMatrix g = matmul_nt(a, a);
  std::vector<double> b(12);
  for (double& v : b) v = rng.normal();
  const double lambda = 1e-6;
  const std::vector<double> c = solve_ridge(g, b, lambda);
  DenseMatrix gl = g;
  for (std::size_t i = 0; i < 12; ++i) gl(i, i) += lambda;
  const std::vector<double> gc = oracles::matvec(gl, c);
  double resid = 0.0, bnorm = 0.0;
  for (std::size_t i = 0; i < 12; ++i) {
    resid += (gc[i] - b[i]) * (gc[i] - b[i]);
    bnorm += b[i] * b[i];
  }
  CHECK(std::sqrt(resid) <= 1e-8 * (1.0 + std::sqrt(bnorm)));
}

TEST_CASE("solve_ridge recovers x from G*x for well-conditioned G") {
  Rng rng(15);
  DenseMatrix a = sample_noise(10, 10, rng);
  DenseMatrix g = matmul_nt(a, a);
  for (std::size_t i = 0; i < 10; ++i) g(i, i) += 0.5;
  std::vector<double> x(10);
  for (double& v : x) v = rng.normal();
  const std::vector<double> gx = oracles::matvec(g, x);
  const std::vector<double> back = solve_ridge(g, gx, 0.0);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < 10; ++i) {
    num += (back[i] - x[i]) * (back[i] - x[i]);
    den += x[i] * x[i];
  }
  CHECK(std::sqrt(num / den) < 1e-9);
}

TEST_CASE("singular system without ridge names the remedy") {
  DenseMatrix g(3, 3, 0.0);
  std::vector<double> b = {1.0, 0.0, 0.0};
  CHECK_THROWS_WITH(solve_ridge(g, b, 0.0), Catch::Matchers::ContainsSubstring("lambda > 0"));
  // with ridge the same system is fine
  const std::vector<double> c = solve_ridge(g, b, 1e-4);
  CHECK(c[0] == Catch::Approx(1.0 / 1e-4));
}

TEST_CASE("solve_ridge rejects asymmetric matrices") {
  DenseMatrix g = DenseMatrix::identity(3);
  g(0, 1) = 0.5;
  CHECK_THROWS_AS(solve_ridge(g, {1.0, 1.0, 1.0}, 0.0), std::invalid_argument);
}

TEST_CASE("finite inputs give finite outputs through the stack") {
  Rng rng(16);
  Mlp net = random_net({3, 16, 16, 2}, 17);
  DenseMatrix batch = sample_noise(64, 3, rng);
  batch *= 50.0;  // saturating inputs stay finite
  const DenseMatrix out = mlp_forward(net, batch);
  CHECK(out.all_finite());
  const MlpGrads grads = mlp_gradients(net, batch, DenseMatrix(64, 2, 1.0));
  for (const auto& w : grads.weights) CHECK(w.all_finite());
  CHECK(grads.inputs.all_finite());
}
