#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpfm/matrix.hpp"
#include "fpfm/rng.hpp"

namespace fpfm {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

enum class Split { TD, UD, US };

inline std::string split_name(Split s) {
  switch (s) {
    case Split::TD: return "TD";
    case Split::UD: return "UD";
    default: return "US";
  }
}
inline Split split_from_name(const std::string& s) {
  if (s == "TD") return Split::TD;
  if (s == "UD") return Split::UD;
  if (s == "US") return Split::US;
  throw std::invalid_argument("unknown split: " + s);
}

// Quarter arc of the unit circle centered at `center_angle`.
struct ArcSpec {
  double center_angle = 0.0;
  double width = kPi / 2.0;
};

// Equal-weight mixture of two training arcs.
struct MixtureSpec {
  ArcSpec a, b;
};

// One Archimedean turn, r = theta / 2*pi for theta in [0, 2*pi].
struct SpiralSpec {};

struct Dataset {
  DenseMatrix samples;  // m x n
  Split split = Split::TD;
  std::string provenance;

  std::size_t count() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
};

inline Dataset sample_arc(const ArcSpec& spec, std::size_t m, Rng rng) {
  if (m < 1) throw std::invalid_argument("sample_arc: m must be >= 1");
  Dataset d;
  d.samples = DenseMatrix(m, 2);
  const double half = spec.width / 2.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double theta = rng.uniform(spec.center_angle - half, spec.center_angle + half);
    d.samples(i, 0) = std::cos(theta);
    d.samples(i, 1) = std::sin(theta);
  }
  d.split = Split::TD;
  d.provenance = "arc(center=" + std::to_string(spec.center_angle) + ")";
  return d;
}

inline Dataset sample_mixture(const MixtureSpec& spec, std::size_t m, Rng rng) {
  if (m < 1) throw std::invalid_argument("sample_mixture: m must be >= 1");
  Dataset d;
  d.samples = DenseMatrix(m, 2);
  const double half_a = spec.a.width / 2.0;
  const double half_b = spec.b.width / 2.0;
  for (std::size_t i = 0; i < m; ++i) {
    const bool first = rng.uniform() < 0.5;
    const double c = first ? spec.a.center_angle : spec.b.center_angle;
    const double h = first ? half_a : half_b;
    const double theta = rng.uniform(c - h, c + h);
    d.samples(i, 0) = std::cos(theta);
    d.samples(i, 1) = std::sin(theta);
  }
  d.split = Split::UD;
  d.provenance = "mixture(" + std::to_string(spec.a.center_angle) + "," +
                 std::to_string(spec.b.center_angle) + ")";
  return d;
}

inline Dataset sample_spiral(const SpiralSpec&, std::size_t m, Rng rng) {
  if (m < 1) throw std::invalid_argument("sample_spiral: m must be >= 1");
  Dataset d;
  d.samples = DenseMatrix(m, 2);
  for (std::size_t i = 0; i < m; ++i) {
    const double theta = rng.uniform(0.0, kTwoPi);
    const double r = theta / kTwoPi;
    d.samples(i, 0) = r * std::cos(theta);
    d.samples(i, 1) = r * std::sin(theta);
  }
  d.split = Split::US;
  d.provenance = "spiral";
  return d;
}

struct SplitFamily {
  std::vector<ArcSpec> td;
  std::vector<MixtureSpec> ud;
  SpiralSpec us;
};

// TD arcs evenly spaced on [0, 2*pi); UD pairs of distinct TD arcs.
inline SplitFamily make_splits(std::size_t n_train_arcs, std::size_t n_mixtures, Rng rng) {
  if (n_train_arcs < 2) throw std::invalid_argument("make_splits: need at least 2 training arcs");
  SplitFamily f;
  for (std::size_t i = 0; i < n_train_arcs; ++i)
    f.td.push_back({kTwoPi * static_cast<double>(i) / static_cast<double>(n_train_arcs)});
  for (std::size_t i = 0; i < n_mixtures; ++i) {
    const std::size_t a = rng.index(n_train_arcs);
    std::size_t b = rng.index(n_train_arcs - 1);
    if (b >= a) ++b;
    f.ud.push_back({f.td[a], f.td[b]});
  }
  return f;
}

}  // namespace fpfm
