#pragma once

#include <functional>
#include <string>

#include "fpfm/flow.hpp"
#include "fpfm/matrix.hpp"
#include "fpfm/rng.hpp"

namespace fpfm {

// A generator of endpoint samples; wraps one or more ODE integrations plus
// whatever per-call adaptation the method needs.
struct Sampler {
  std::string tag;
  std::function<DenseMatrix(std::size_t m, Rng rng, const IntegratorConfig&)> generate;
};

// Noise -> Euler integration. When t_max < 1 the remaining interval is
// covered by one extrapolation step with the velocity at t_max (whose
// evaluation a clamped field pins to its last valid time).
inline Sampler make_field_sampler(VelocityField field, std::size_t dim) {
  Sampler s;
  s.tag = field.tag;
  s.generate = [field, dim](std::size_t m, Rng rng, const IntegratorConfig& cfg) {
    DenseMatrix x = sample_noise(m, dim, rng);
    x = integrate(field, x, cfg);
    if (cfg.t_max < 1.0) {
      DenseMatrix v = field(x, cfg.t_max);
      v *= 1.0 - cfg.t_max;
      x += v;
    }
    return x;
  };
  return s;
}

}  // namespace fpfm
