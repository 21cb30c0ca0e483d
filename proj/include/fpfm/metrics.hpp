#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpfm/datasets.hpp"
#include "fpfm/matrix.hpp"
#include "fpfm/sampler.hpp"

namespace fpfm {

// Per-point manifold radii: distance to the kappa-th nearest neighbor within
// the reference set (self excluded). Brute force; m stays in the thousands.
struct ManifoldEstimate {
  DenseMatrix points;
  std::vector<double> radii;
  std::size_t kappa = 3;
};

inline ManifoldEstimate make_manifold(const DenseMatrix& points, std::size_t kappa) {
  const std::size_t m = points.rows();
  if (m <= kappa)
    throw std::invalid_argument("make_manifold: need more than kappa points");
  ManifoldEstimate est;
  est.points = points;
  est.kappa = kappa;
  est.radii.resize(m);
  const std::size_t n = points.cols();
  std::vector<double> d2(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t w = 0;
    const double* pi = points.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      const double* pj = points.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double d = pi[c] - pj[c];
        s += d * d;
      }
      d2[w++] = s;
    }
    std::nth_element(d2.begin(), d2.begin() + (kappa - 1), d2.end());
    est.radii[i] = std::sqrt(d2[kappa - 1]);
  }
  return est;
}

// Fraction of query points lying within some reference point's radius.
inline double manifold_coverage(const ManifoldEstimate& ref, const DenseMatrix& query) {
  const std::size_t n = ref.points.cols();
  if (query.cols() != n) throw ShapeError("manifold_coverage: dimension mismatch");
  std::size_t hits = 0;
  for (std::size_t q = 0; q < query.rows(); ++q) {
    const double* pq = query.row(q);
    for (std::size_t j = 0; j < ref.points.rows(); ++j) {
      const double* pj = ref.points.row(j);
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double d = pq[c] - pj[c];
        s += d * d;
      }
      if (s <= ref.radii[j] * ref.radii[j]) {
        ++hits;
        break;
      }
    }
  }
  return query.rows() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(query.rows());
}

// precision: generated points on the real manifold; recall: roles swapped.
inline std::pair<double, double> precision_recall(const DenseMatrix& real,
                                                  const DenseMatrix& generated,
                                                  std::size_t kappa) {
  const ManifoldEstimate real_manifold = make_manifold(real, kappa);
  const ManifoldEstimate gen_manifold = make_manifold(generated, kappa);
  return {manifold_coverage(real_manifold, generated),
          manifold_coverage(gen_manifold, real)};
}

inline std::pair<double, double> precision_recall(const Dataset& real, const Dataset& generated,
                                                  std::size_t kappa) {
  return precision_recall(real.samples, generated.samples, kappa);
}

// Wall clock around one generation call (adaptation the sampler performs
// per call included; model training/loading excluded by construction).
inline double time_generation(const Sampler& sampler, std::size_t m, Rng rng,
                              const IntegratorConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const DenseMatrix out = sampler.generate(m, rng, cfg);
  const auto stop = std::chrono::steady_clock::now();
  (void)out;
  return std::chrono::duration<double>(stop - start).count();
}

struct TimingStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> samples;
};

inline TimingStats time_generation_stats(const Sampler& sampler, std::size_t m, Rng rng,
                                         const IntegratorConfig& cfg, std::size_t reps) {
  TimingStats stats;
  for (std::size_t r = 0; r < reps; ++r)
    stats.samples.push_back(time_generation(sampler, m, rng.split(r), cfg));
  for (double s : stats.samples) stats.mean += s;
  stats.mean /= static_cast<double>(stats.samples.size());
  if (stats.samples.size() > 1) {
    double acc = 0.0;
    for (double s : stats.samples) acc += (s - stats.mean) * (s - stats.mean);
    stats.stddev = std::sqrt(acc / static_cast<double>(stats.samples.size() - 1));
  }
  return stats;
}

struct MetricReport {
  std::string method;
  Split split = Split::TD;
  std::uint64_t seed = 0;
  double precision = 0.0;
  double recall = 0.0;
  double gen_seconds = 0.0;
  std::size_t n_real = 0;
  std::size_t n_gen = 0;
  bool failed = false;
  std::string error;
};

struct AggregateRow {
  std::string method;
  Split split = Split::TD;
  std::size_t n_seeds = 0;
  double precision_mean = 0.0, precision_std = 0.0;
  double recall_mean = 0.0, recall_std = 0.0;
  double gen_seconds_mean = 0.0, gen_seconds_std = 0.0;
};

namespace detail {
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return {mean, std::sqrt(acc / static_cast<double>(v.size() - 1))};
}
}  // namespace detail

// Groups by (method, split) and reports mean and sample std over seeds.
// Failed cells are skipped. Single-seed groups carry n_seeds = 1 and std 0.
inline std::vector<AggregateRow> aggregate(std::vector<MetricReport> reports) {
  std::sort(reports.begin(), reports.end(), [](const MetricReport& a, const MetricReport& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.split != b.split) return static_cast<int>(a.split) < static_cast<int>(b.split);
    return a.seed < b.seed;
  });
  std::vector<AggregateRow> rows;
  std::size_t i = 0;
  while (i < reports.size()) {
    std::size_t j = i;
    std::vector<double> prec, rec, secs;
    while (j < reports.size() && reports[j].method == reports[i].method &&
           reports[j].split == reports[i].split) {
      if (!reports[j].failed) {
        prec.push_back(reports[j].precision);
        rec.push_back(reports[j].recall);
        secs.push_back(reports[j].gen_seconds);
      }
      ++j;
    }
    if (!prec.empty()) {
      AggregateRow row;
      row.method = reports[i].method;
      row.split = reports[i].split;
      row.n_seeds = prec.size();
      std::tie(row.precision_mean, row.precision_std) = detail::mean_std(prec);
      std::tie(row.recall_mean, row.recall_std) = detail::mean_std(rec);
      std::tie(row.gen_seconds_mean, row.gen_seconds_std) = detail::mean_std(secs);
      rows.push_back(row);
    }
    i = j;
  }
  return rows;
}

}  // namespace fpfm
