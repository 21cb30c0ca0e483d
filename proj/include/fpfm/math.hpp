#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>

namespace fpfm {
namespace detail {

// exp(x) for x in [-45, 1]: argument reduction against log 2 plus a
// degree-12 Taylor tail. Branch-free so the array loops auto-vectorize.
inline double exp_reduced(double x) {
  constexpr double kLog2E = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  const double nf = std::floor(x * kLog2E + 0.5);
  const double r = (x - nf * kLn2Hi) - nf * kLn2Lo;
  // Taylor coefficients 1/k!
  double p = 2.08767569878680989792e-09;  // 1/12!
  p = p * r + 2.50521083854417187751e-08;
  p = p * r + 2.75573192239858906526e-07;
  p = p * r + 2.75573192239858925110e-06;
  p = p * r + 2.48015873015873015873e-05;
  p = p * r + 1.98412698412698412698e-04;
  p = p * r + 1.38888888888888888889e-03;
  p = p * r + 8.33333333333333333333e-03;
  p = p * r + 4.16666666666666666667e-02;
  p = p * r + 1.66666666666666666667e-01;
  p = p * r + 5.0e-01;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const auto n = static_cast<std::int64_t>(nf);
  const double scale = std::bit_cast<double>(static_cast<std::uint64_t>(n + 1023) << 52);
  return p * scale;
}

inline double tanh_core(double x) {
  const double z = std::abs(x);
  // exp argument stays in range; beyond 20 the result saturates anyway
  const double e = exp_reduced(-2.0 * std::min(z, 20.0));
  const double t = (1.0 - e) / (1.0 + e);
  const double sat = z >= 20.0 ? 1.0 : t;
  return std::copysign(sat, x);
}

}  // namespace detail

inline double fast_tanh(double x) { return detail::tanh_core(x); }

inline void fast_tanh_inplace(double* p, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) p[i] = detail::tanh_core(p[i]);
}

}  // namespace fpfm
