#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <thread>

#include "fpfm/datasets.hpp"
#include "fpfm/flow.hpp"
#include "fpfm/metrics.hpp"
#include "support/oracles.hpp"

using namespace fpfm;

TEST_CASE("identical sets score perfect precision and recall") {
  Rng rng(1);
  const DenseMatrix pts = sample_noise(50, 2, rng);
  const auto [prec, rec] = precision_recall(pts, pts, 3);
  CHECK(prec == 1.0);
  CHECK(rec == 1.0);
}

TEST_CASE("a far-translated set scores zero both ways") {
  Rng rng(2);
  const DenseMatrix real = sample_noise(60, 2, rng);
  DenseMatrix generated = real;
  for (std::size_t i = 0; i < generated.size(); ++i) generated.data()[i] += 1e6;
  const auto [prec, rec] = precision_recall(real, generated, 3);
  CHECK(prec == 0.0);
  CHECK(rec == 0.0);
}

TEST_CASE("constructed circle case matches the exhaustive oracle") {
  Rng rng(3);
  DenseMatrix real(100, 2);
  for (std::size_t i = 0; i < 100; ++i) {
    const double theta = rng.uniform(0.0, kTwoPi);
    real(i, 0) = std::cos(theta);
    real(i, 1) = std::sin(theta);
  }
  DenseMatrix generated(100, 2);
  for (std::size_t i = 0; i < 50; ++i) {
    const double theta = rng.uniform(0.0, kTwoPi);
    generated(i, 0) = std::cos(theta);
    generated(i, 1) = std::sin(theta);
  }
  for (std::size_t i = 50; i < 100; ++i) {
    const double theta = rng.uniform(0.0, kTwoPi);
    generated(i, 0) = 100.0 * std::cos(theta);
    generated(i, 1) = 100.0 * std::sin(theta);
  }
  const auto [prec, rec] = precision_recall(real, generated, 3);
  const auto [oprec, orec] = oracles::brute_precision_recall(real, generated, 3);
  CHECK(prec == oprec);
  CHECK(rec == orec);
  CHECK(prec <= 0.5 + 1e-12);
}

TEST_CASE("randomized cases agree exactly with the oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m_real = 20 + rng.index(280);
    const std::size_t m_gen = 20 + rng.index(280);
    Rng r1 = rng.split(trial);
    DenseMatrix real = sample_noise(m_real, 2, r1);
    DenseMatrix generated = sample_noise(m_gen, 2, r1);
    generated *= 1.5;
    const auto [prec, rec] = precision_recall(real, generated, 3);
    const auto [oprec, orec] = oracles::brute_precision_recall(real, generated, 3);
    CHECK(prec == oprec);
    CHECK(rec == orec);
  }
}

TEST_CASE("swapping sets swaps precision and recall") {
  Rng rng(5);
  const DenseMatrix a = sample_noise(80, 2, rng);
  DenseMatrix b = sample_noise(90, 2, rng);
  b *= 1.2;
  const auto [p1, r1] = precision_recall(a, b, 3);
  const auto [p2, r2] = precision_recall(b, a, 3);
  CHECK(p1 == r2);
  CHECK(r1 == p2);
}

TEST_CASE("a shared rigid rotation changes nothing") {
  Rng rng(6);
  const DenseMatrix a = sample_noise(70, 2, rng);
  DenseMatrix b = sample_noise(70, 2, rng);
  const auto [p0, r0] = precision_recall(a, b, 3);
  const double c = std::cos(0.83), s = std::sin(0.83);
  auto rotate = [&](const DenseMatrix& m) {
    DenseMatrix out(m.rows(), 2);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      out(i, 0) = c * m(i, 0) - s * m(i, 1);
      out(i, 1) = s * m(i, 0) + c * m(i, 1);
    }
    return out;
  };
  const auto [p1, r1] = precision_recall(rotate(a), rotate(b), 3);
  CHECK(p0 == Catch::Approx(p1).margin(1e-12));
  CHECK(r0 == Catch::Approx(r1).margin(1e-12));
}

TEST_CASE("adding an off-manifold point cannot raise precision") {
  Rng rng(7);
  const DenseMatrix real = sample_noise(60, 2, rng);
  const DenseMatrix gen = sample_noise(40, 2, rng);
  const auto [p0, r0] = precision_recall(real, gen, 3);
  DenseMatrix bigger(41, 2);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 2; ++j) bigger(i, j) = gen(i, j);
  bigger(40, 0) = 1e7;
  bigger(40, 1) = 1e7;
  const auto [p1, r1] = precision_recall(real, bigger, 3);
  CHECK(p1 <= p0);
  (void)r0;
  (void)r1;
}

TEST_CASE("too few points are rejected") {
  DenseMatrix tiny(3, 2);
  CHECK_THROWS_AS(make_manifold(tiny, 3), std::invalid_argument);
}

TEST_CASE("timing orders a stub against a worked field") {
  Sampler stub;
  stub.tag = "stub";
  stub.generate = [](std::size_t m, Rng, const IntegratorConfig&) {
    return DenseMatrix(m, 2);
  };
  Sampler busy;
  busy.tag = "busy";
  busy.generate = [](std::size_t m, Rng rng, const IntegratorConfig& cfg) {
    DenseMatrix x = sample_noise(m, 2, rng);
    VelocityField f;
    f.eval = [](const DenseMatrix& v, double) {
      DenseMatrix out = v;
      for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
      return out;
    };
    return integrate(f, x, cfg);
  };
  const double t_stub = time_generation(stub, 2000, Rng(8), {200, 1.0});
  const double t_busy = time_generation(busy, 2000, Rng(8), {200, 1.0});
  CHECK(t_stub < t_busy);
}

TEST_CASE("timing stats report mean and spread over repeats") {
  Sampler s;
  s.tag = "sleepy";
  s.generate = [](std::size_t m, Rng, const IntegratorConfig&) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    return DenseMatrix(m, 2);
  };
  const TimingStats stats = time_generation_stats(s, 1, Rng(9), {1, 1.0}, 4);
  CHECK(stats.samples.size() == 4);
  CHECK(stats.mean >= 0.005);
  CHECK(stats.stddev >= 0.0);
}

TEST_CASE("aggregation groups by method and split with sample std") {
  std::vector<MetricReport> reports;
  const double values[5] = {0.9, 0.85, 0.95, 0.88, 0.92};
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    MetricReport r;
    r.method = "dynamic";
    r.split = Split::TD;
    r.seed = seed;
    r.precision = values[seed];
    r.recall = 0.5;
    r.gen_seconds = 1.0;
    reports.push_back(r);
  }
  MetricReport single;
  single.method = "static";
  single.split = Split::US;
  single.seed = 0;
  single.precision = 0.3;
  single.recall = 0.4;
  reports.push_back(single);

  const std::vector<AggregateRow> rows = aggregate(reports);
  REQUIRE(rows.size() == 2);
  const AggregateRow& dyn = rows[0];
  CHECK(dyn.method == "dynamic");
  CHECK(dyn.n_seeds == 5);
  double mean = 0.0;
  for (double v : values) mean += v / 5.0;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean) / 4.0;
  CHECK(dyn.precision_mean == Catch::Approx(mean).margin(1e-15));
  CHECK(dyn.precision_std == Catch::Approx(std::sqrt(var)).margin(1e-15));
  CHECK(dyn.recall_std == 0.0);

  const AggregateRow& st = rows[1];
  CHECK(st.method == "static");
  CHECK(st.n_seeds == 1);  // single-seed groups are flagged by their count
  CHECK(st.precision_std == 0.0);
}

TEST_CASE("failed rows are excluded from aggregation") {
  std::vector<MetricReport> reports(3);
  for (std::uint64_t s = 0; s < 3; ++s) {
    reports[s].method = "temporal";
    reports[s].split = Split::UD;
    reports[s].seed = s;
    reports[s].precision = 0.5;
  }
  reports[1].failed = true;
  const std::vector<AggregateRow> rows = aggregate(reports);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].n_seeds == 2);
}
