#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fpfm/baselines.hpp"
#include "fpfm/basis.hpp"
#include "fpfm/config.hpp"
#include "fpfm/csv.hpp"
#include "fpfm/datasets.hpp"
#include "fpfm/dynamic.hpp"
#include "fpfm/metrics.hpp"
#include "fpfm/svg.hpp"

namespace fpfm {

// A resolved evaluation target: something we can draw datasets from, plus
// the conditioning rule for the conditional baseline.
struct TargetSpec {
  Split split = Split::TD;
  std::function<Dataset(std::size_t, Rng)> draw;
  ConditioningCode code;
  std::string name;
};

inline TargetSpec make_target(const SplitFamily& family, Split split, std::uint64_t seed) {
  TargetSpec t;
  t.split = split;
  switch (split) {
    case Split::TD: {
      const ArcSpec arc = family.td[seed % family.td.size()];
      t.draw = [arc](std::size_t m, Rng rng) { return sample_arc(arc, m, rng); };
      t.code = {arc.center_angle};
      t.name = "arc" + std::to_string(seed % family.td.size());
      break;
    }
    case Split::UD: {
      const MixtureSpec mix = family.ud[seed % family.ud.size()];
      t.draw = [mix](std::size_t m, Rng rng) {
        Dataset d = sample_mixture(mix, m, rng);
        return d;
      };
      t.code = code_for_mixture(mix);
      t.name = "mixture" + std::to_string(seed % family.ud.size());
      break;
    }
    case Split::US: {
      const SpiralSpec spiral = family.us;
      t.draw = [spiral](std::size_t m, Rng rng) { return sample_spiral(spiral, m, rng); };
      t.code = {0.0};
      t.name = "spiral";
      break;
    }
  }
  return t;
}

struct TrainedModels {
  std::shared_ptr<const BasisSet> static_basis;
  std::shared_ptr<const BasisSet> temporal_basis;
  std::shared_ptr<const BasisSet> dynamic_basis;
  std::shared_ptr<const Mlp> unconditional;
  std::shared_ptr<const Mlp> conditional;
  std::vector<Dataset> train_data;
  std::vector<ConditioningCode> train_codes;
  std::map<std::string, TrainLog> logs;
};

inline bool method_needs_unconditional(const std::string& method) {
  return method == "unconditional" || method == "finetune" || method == "classifier_guided" ||
         method == "distribution_guided";
}

inline bool method_needs_shots(const std::string& method) {
  return method != "unconditional" && method != "conditional";
}

// Trains every model the requested methods share for one benchmark seed.
inline TrainedModels train_models(const ExperimentConfig& cfg, std::uint64_t seed,
                                  const std::vector<std::string>& methods) {
  Rng root(cfg.run.seed);
  Rng cell = root.split("cell", seed);

  TrainedModels models;
  const SplitFamily family =
      make_splits(cfg.dataset.n_train_arcs, cfg.dataset.n_mixtures, root.split("splits"));
  for (std::size_t i = 0; i < family.td.size(); ++i) {
    models.train_data.push_back(
        sample_arc(family.td[i], cfg.dataset.shots, cell.split("train-data", i)));
    models.train_codes.push_back({family.td[i].center_angle});
  }

  auto want = [&](const char* m) {
    for (const std::string& name : methods)
      if (name == m) return true;
    return false;
  };

  TrainConfig tc = cfg.train;
  if (want("static")) {
    tc.seed = cell.split("train-static").key();
    models.static_basis = std::make_shared<const BasisSet>(
        train_static(models.train_data, tc, &models.logs["static"]));
  }
  if (want("temporal")) {
    tc.seed = cell.split("train-temporal").key();
    models.temporal_basis = std::make_shared<const BasisSet>(
        train_temporal(models.train_data, tc, &models.logs["temporal"]));
  }
  if (want("dynamic")) {
    tc.seed = cell.split("train-dynamic").key();
    models.dynamic_basis = std::make_shared<const BasisSet>(
        train_dynamic(models.train_data, tc, cfg.dynamic, &models.logs["dynamic"]));
  }
  bool needs_uncond = false;
  for (const std::string& m : methods) needs_uncond |= method_needs_unconditional(m);
  if (needs_uncond) {
    tc.seed = cell.split("train-unconditional").key();
    models.unconditional = std::make_shared<const Mlp>(
        train_unconditional(models.train_data, tc, &models.logs["unconditional"]));
  }
  if (want("conditional")) {
    tc.seed = cell.split("train-conditional").key();
    models.conditional = std::make_shared<const Mlp>(
        train_conditional(models.train_data, models.train_codes, tc, &models.logs["conditional"]));
  }
  return models;
}

// Builds the per-target sampler; every per-target adaptation (projection,
// finetuning, classifier training, ...) happens inside generate so that the
// timed cost matches what the method actually pays per target.
inline Sampler make_method_sampler(const std::string& method, const TrainedModels& models,
                                   const ExperimentConfig& cfg, const Dataset& shots,
                                   const ConditioningCode& code, Rng adapt_rng) {
  const std::size_t n = 2;
  const std::size_t m_eval = cfg.eval.m_eval;
  const double lambda = cfg.train.lambda;

  if (method == "static") {
    if (!models.static_basis) throw std::invalid_argument("static basis not trained");
    auto basis = models.static_basis;
    Sampler s;
    s.tag = "static";
    s.generate = [basis, shots, m_eval, lambda, adapt_rng](std::size_t m, Rng rng,
                                                           const IntegratorConfig& cfg_in) {
      const CoefficientVector cv = project_static(*basis, shots, m_eval, adapt_rng, lambda);
      const VelocityField field = make_static_field(basis, cv);
      DenseMatrix x = sample_noise(m, basis->n, rng);
      return integrate(field, x, {cfg_in.steps, 1.0});
    };
    return s;
  }
  if (method == "temporal") {
    if (!models.temporal_basis) throw std::invalid_argument("temporal basis not trained");
    auto basis = models.temporal_basis;
    const std::uint64_t stream = adapt_rng.key();
    Sampler s;
    s.tag = "temporal";
    s.generate = [basis, shots, m_eval, lambda, stream](std::size_t m, Rng rng,
                                                        const IntegratorConfig& cfg_in) {
      const VelocityField field = make_temporal_field(basis, shots, m_eval, lambda, stream);
      DenseMatrix x = sample_noise(m, basis->n, rng);
      return integrate(field, x, {cfg_in.steps, 1.0});
    };
    return s;
  }
  if (method == "dynamic") {
    if (!models.dynamic_basis) throw std::invalid_argument("dynamic basis not trained");
    auto basis = models.dynamic_basis;
    const DynamicConfig dcfg = cfg.dynamic;
    Sampler s;
    s.tag = "dynamic";
    s.generate = [basis, shots, dcfg](std::size_t m, Rng rng, const IntegratorConfig& cfg_in) {
      const VelocityField field = make_dynamic_field(basis, shots, dcfg);
      DenseMatrix x = sample_noise(m, basis->n, rng);
      // integrate to 1 - eps, then extrapolate the tail with the last velocity
      x = integrate(field, x, {cfg_in.steps, 1.0 - dcfg.t_clamp_eps});
      DenseMatrix v = field(x, 1.0 - dcfg.t_clamp_eps);
      v *= dcfg.t_clamp_eps;
      x += v;
      return x;
    };
    return s;
  }
  if (method == "unconditional") {
    if (!models.unconditional) throw std::invalid_argument("unconditional model not trained");
    VelocityField field = make_mlp_field(*models.unconditional, "unconditional");
    return make_field_sampler(field, n);
  }
  if (method == "conditional") {
    if (!models.conditional) throw std::invalid_argument("conditional model not trained");
    VelocityField field = make_conditional_field(*models.conditional, code);
    return make_field_sampler(field, n);
  }
  if (method == "finetune") {
    if (!models.unconditional) throw std::invalid_argument("base model not trained");
    auto base = models.unconditional;
    TrainConfig ft = cfg.train;
    ft.gradient_steps = cfg.baseline.finetune_steps;
    ft.lr = 1e-3;
    ft.seed = adapt_rng.key();
    Sampler s;
    s.tag = "finetune";
    s.generate = [base, shots, ft](std::size_t m, Rng rng, const IntegratorConfig& cfg_in) {
      const Mlp tuned = finetune(*base, shots, ft);
      const VelocityField field = make_mlp_field(tuned, "finetune");
      DenseMatrix x = sample_noise(m, 2, rng);
      return integrate(field, x, {cfg_in.steps, 1.0});
    };
    return s;
  }
  if (method == "classifier_guided") {
    if (!models.unconditional) throw std::invalid_argument("base model not trained");
    auto base = models.unconditional;
    const std::vector<Dataset> negatives = models.train_data;
    TrainConfig cc = cfg.train;
    cc.gradient_steps = cfg.baseline.finetune_steps;
    cc.seed = adapt_rng.key();
    const GuidanceConfig gcfg{cfg.guidance.alpha};
    Sampler s;
    s.tag = "classifier_guided";
    s.generate = [base, shots, negatives, cc, gcfg](std::size_t m, Rng rng,
                                                    const IntegratorConfig& cfg_in) {
      const Classifier clf = train_classifier(shots, negatives, cc);
      const VelocityField guided =
          classifier_guided_field(make_mlp_field(*base, "unconditional"), clf, gcfg);
      DenseMatrix x = sample_noise(m, 2, rng);
      return integrate(guided, x, {cfg_in.steps, 1.0});
    };
    return s;
  }
  if (method == "distribution_guided") {
    if (!models.unconditional) throw std::invalid_argument("base model not trained");
    auto base = models.unconditional;
    TrainConfig dg = cfg.train;
    dg.gradient_steps = cfg.baseline.finetune_steps;
    dg.seed = adapt_rng.key();
    const std::size_t backward_steps = cfg.baseline.backward_steps;
    Sampler s;
    s.tag = "distribution_guided";
    s.generate = [base, shots, dg, backward_steps](std::size_t m, Rng rng,
                                                   const IntegratorConfig& cfg_in) {
      const VelocityField base_field = make_mlp_field(*base, "unconditional");
      const DistributionGuidedModel model =
          train_distribution_guided(base_field, 2, shots, dg, backward_steps);
      const Sampler composed = make_distribution_guided_sampler(base_field, model, 2);
      return composed.generate(m, rng, {cfg_in.steps, 1.0});
    };
    return s;
  }
  throw std::invalid_argument("unknown method: " + method);
}

struct BenchmarkOutput {
  std::vector<MetricReport> reports;
  std::vector<AggregateRow> aggregates;
};

namespace detail {

inline std::size_t worker_count(std::size_t jobs) {
  std::size_t workers = std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  if (const char* env = std::getenv("FPFM_WORKERS")) {
    const long v = std::atol(env);
    if (v >= 1) workers = static_cast<std::size_t>(v);
  }
  return std::min(workers, jobs);
}

inline void sort_reports(std::vector<MetricReport>& reports) {
  std::sort(reports.begin(), reports.end(), [](const MetricReport& a, const MetricReport& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.split != b.split) return static_cast<int>(a.split) < static_cast<int>(b.split);
    return a.seed < b.seed;
  });
}

}  // namespace detail

// Full grid: methods x splits x seeds. Per-seed jobs run on a bounded worker
// pool; all randomness is derived from (run.seed, cell seed, method, split),
// so scheduling cannot change any result.
inline BenchmarkOutput run_benchmark(const ExperimentConfig& cfg,
                                     const std::string& out_dir = "") {
  const SplitFamily family = make_splits(cfg.dataset.n_train_arcs, cfg.dataset.n_mixtures,
                                         Rng(cfg.run.seed).split("splits"));
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::vector<std::vector<MetricReport>> per_seed(cfg.run.seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;

  auto run_seed = [&](std::size_t seed_idx) {
    const std::uint64_t seed = cfg.run.seeds[seed_idx];
    const TrainedModels models = train_models(cfg, seed, cfg.run.methods);
    Rng cell = Rng(cfg.run.seed).split("cell", seed);
    for (const std::string& split_name : cfg.run.splits) {
      const Split split = split_from_name(split_name);
      const TargetSpec target = make_target(family, split, seed);
      const Dataset shots =
          target.draw(cfg.dataset.shots, cell.split("shots", static_cast<std::uint64_t>(split)));
      const Dataset real_fresh = target.draw(
          cfg.eval.eval_samples, cell.split("real", static_cast<std::uint64_t>(split)));
      const Dataset& reference = cfg.eval.reference == "shots" ? shots : real_fresh;
      for (const std::string& method : cfg.run.methods) {
        MetricReport row;
        row.method = method;
        row.split = split;
        row.seed = seed;
        row.n_real = reference.count();
        row.n_gen = cfg.eval.eval_samples;
        try {
          Rng adapt = cell.split("adapt-" + method, static_cast<std::uint64_t>(split));
          Rng gen = cell.split("gen-" + method, static_cast<std::uint64_t>(split));
          const Sampler sampler =
              make_method_sampler(method, models, cfg, shots, target.code, adapt);
          const auto t0 = std::chrono::steady_clock::now();
          const DenseMatrix generated =
              sampler.generate(cfg.eval.eval_samples, gen, {cfg.integrator.steps, 1.0});
          const auto t1 = std::chrono::steady_clock::now();
          row.gen_seconds = std::chrono::duration<double>(t1 - t0).count();
          const auto [prec, rec] =
              precision_recall(reference.samples, generated, cfg.eval.kappa);
          row.precision = prec;
          row.recall = rec;
          if (!out_dir.empty()) {
            const std::string svg_path = out_dir + "/scatter_" + method + "_" + split_name +
                                         "_seed" + std::to_string(seed) + ".svg";
            std::lock_guard<std::mutex> lock(io_mutex);
            write_scatter_svg(svg_path, shots.samples, generated,
                              method + " / " + split_name + " / seed " + std::to_string(seed));
          }
        } catch (const std::exception& e) {
          row.failed = true;
          row.error = e.what();
        }
        per_seed[seed_idx].push_back(row);
      }
    }
  };

  const std::size_t workers = detail::worker_count(cfg.run.seeds.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < cfg.run.seeds.size(); ++i) run_seed(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&]() {
        while (true) {
          const std::size_t i = next.fetch_add(1);
          if (i >= cfg.run.seeds.size()) break;
          run_seed(i);
        }
      });
    for (std::thread& t : pool) t.join();
  }

  BenchmarkOutput out;
  for (const auto& rows : per_seed)
    out.reports.insert(out.reports.end(), rows.begin(), rows.end());
  detail::sort_reports(out.reports);
  out.aggregates = aggregate(out.reports);
  return out;
}

inline void write_report_csv(const std::string& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot open for writing: " + path);
  out << "method,split,seed,precision,recall,gen_seconds\n";
  for (const MetricReport& r : reports) {
    out << r.method << ',' << split_name(r.split) << ',' << r.seed << ',';
    if (r.failed)
      out << "nan,nan,nan";
    else
      out << csv::format_double(r.precision) << ',' << csv::format_double(r.recall) << ','
          << csv::format_double(r.gen_seconds);
    out << '\n';
  }
}

inline void write_aggregate_csv(const std::string& path,
                                const std::vector<AggregateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot open for writing: " + path);
  out << "method,split,n_seeds,precision_mean,precision_std,recall_mean,recall_std,"
         "gen_seconds_mean,gen_seconds_std\n";
  for (const AggregateRow& r : rows) {
    out << r.method << ',' << split_name(r.split) << ',' << r.n_seeds << ','
        << csv::format_double(r.precision_mean) << ',' << csv::format_double(r.precision_std)
        << ',' << csv::format_double(r.recall_mean) << ',' << csv::format_double(r.recall_std)
        << ',' << csv::format_double(r.gen_seconds_mean) << ','
        << csv::format_double(r.gen_seconds_std) << '\n';
  }
}

struct SweepCell {
  double value = 0.0;
  BenchmarkOutput output;
};

// One benchmark per axis value. Ablations are measured against the provided
// shot set: under the few-shot assumption those are the only real samples
// available for the target, so radii shrink as shots grow.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& base_cfg, const std::string& axis,
                                        const std::vector<double>& values,
                                        const std::string& out_dir = "") {
  if (values.empty()) throw ConfigError("sweep: empty value list");
  if (axis != "shots" && axis != "basis_count")
    throw ConfigError("sweep: axis must be 'shots' or 'basis_count'");
  std::vector<SweepCell> cells;
  for (double v : values) {
    ExperimentConfig cfg = base_cfg;
    cfg.eval.reference = "shots";
    if (axis == "shots")
      cfg.dataset.shots = static_cast<std::size_t>(v);
    else
      cfg.train.k = static_cast<std::size_t>(v);
    SweepCell cell;
    cell.value = v;
    cell.output = run_benchmark(cfg, out_dir.empty() ? "" : out_dir + "/" + axis + "_" +
                                                               std::to_string(static_cast<long>(v)));
    cells.push_back(std::move(cell));
  }
  return cells;
}

inline void write_sweep_csv(const std::string& path, const std::string& axis,
                            const std::vector<SweepCell>& cells) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot open for writing: " + path);
  out << axis << ",method,split,seed,precision,recall,gen_seconds\n";
  for (const SweepCell& cell : cells)
    for (const MetricReport& r : cell.output.reports) {
      out << csv::format_double(cell.value) << ',' << r.method << ',' << split_name(r.split)
          << ',' << r.seed << ',';
      if (r.failed)
        out << "nan,nan,nan";
      else
        out << csv::format_double(r.precision) << ',' << csv::format_double(r.recall) << ','
            << csv::format_double(r.gen_seconds);
      out << '\n';
    }
}

}  // namespace fpfm
