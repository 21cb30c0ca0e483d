#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "fpfm/matrix.hpp"

namespace fpfm {

struct AdamState {
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<DenseMatrix> m;  // first moments, one per parameter tensor
  std::vector<DenseMatrix> v;  // second moments
};

inline AdamState make_adam_state(const std::vector<DenseMatrix*>& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const DenseMatrix* p : params) {
    s.m.emplace_back(p->rows(), p->cols());
    s.v.emplace_back(p->rows(), p->cols());
  }
  return s;
}

// Bias-corrected Adam update in place.
inline void adam_step(const std::vector<DenseMatrix*>& params,
                      const std::vector<const DenseMatrix*>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state counts disagree");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    DenseMatrix& w = *params[p];
    const DenseMatrix& g = *grads[p];
    DenseMatrix& m = state.m[p];
    DenseMatrix& v = state.v[p];
    if (!w.same_shape(g) || !w.same_shape(m))
      throw ShapeError("adam_step: tensor shape mismatch at parameter " + std::to_string(p));
    double* wd = w.data();
    const double* gd = g.data();
    double* md = m.data();
    double* vd = v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * gd[i];
      vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * gd[i] * gd[i];
      const double mhat = md[i] / c1;
      const double vhat = vd[i] / c2;
      wd[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace fpfm
