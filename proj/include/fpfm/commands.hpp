#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fpfm/checkpoint.hpp"
#include "fpfm/config.hpp"
#include "fpfm/experiment.hpp"

namespace fpfm {

// In-process command implementations; the CLI binary is a thin wrapper so
// tests can drive every code path directly.

struct TrainOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

inline int cmd_train(const TrainOptions& opt) {
  ExperimentConfig cfg = parse_config_file(opt.config_path);
  if (opt.seed) cfg.run.seed = *opt.seed;
  if (opt.out_dir) cfg.run.out_dir = *opt.out_dir;
  std::filesystem::create_directories(cfg.run.out_dir);
  const std::string snapshot = config_to_text(cfg);
  const std::uint64_t cell_seed = cfg.run.seeds.front();

  const TrainedModels models = train_models(cfg, cell_seed, cfg.run.methods);

  for (const std::string& method : cfg.run.methods) {
    Checkpoint ckpt;
    if (method == "static")
      ckpt = checkpoint_from_basis(method, *models.static_basis, snapshot, cfg.run.seed);
    else if (method == "temporal")
      ckpt = checkpoint_from_basis(method, *models.temporal_basis, snapshot, cfg.run.seed);
    else if (method == "dynamic")
      ckpt = checkpoint_from_basis(method, *models.dynamic_basis, snapshot, cfg.run.seed);
    else if (method == "conditional")
      ckpt = checkpoint_from_mlp(method, *models.conditional, 2, snapshot, cfg.run.seed);
    else
      ckpt = checkpoint_from_mlp(method, *models.unconditional, 2, snapshot, cfg.run.seed);
    checkpoint_save(cfg.run.out_dir + "/" + method + ".fpfm", ckpt);
  }

  {
    std::ofstream log(cfg.run.out_dir + "/training_log.csv");
    log << "method,step,loss\n";
    for (const auto& [method, tl] : models.logs)
      for (std::size_t s = 0; s < tl.loss.size(); ++s)
        log << method << ',' << s << ',' << csv::format_double(tl.loss[s]) << '\n';
  }

  if (models.static_basis) {
    Rng diag_rng = Rng(cfg.run.seed).split("coeff-diagnostic");
    const DenseMatrix dist = coefficient_distances(*models.static_basis, models.train_data,
                                                   cfg.eval.m_eval, diag_rng, cfg.train.lambda);
    std::ofstream out(cfg.run.out_dir + "/coeff_distances.csv");
    for (std::size_t i = 0; i < dist.rows(); ++i) {
      for (std::size_t j = 0; j < dist.cols(); ++j)
        out << (j ? "," : "") << csv::format_double(dist(i, j));
      out << '\n';
    }
  }
  return 0;
}

struct GenerateOptions {
  std::string checkpoint_path;
  std::optional<std::string> shots_csv;
  std::optional<std::string> split;
  std::size_t split_index = 0;
  std::optional<std::size_t> shots_m;
  std::size_t m_out = 1000;
  std::uint64_t seed = 0;
  std::string out_csv;
  std::optional<std::string> svg_path;
  std::optional<std::size_t> steps;
};

inline int cmd_generate(const GenerateOptions& opt) {
  const Checkpoint ckpt = checkpoint_load(opt.checkpoint_path);
  ExperimentConfig cfg = parse_config_text(ckpt.config_snapshot);
  if (opt.steps) cfg.integrator.steps = *opt.steps;
  cfg.run.seed = ckpt.root_seed;

  TrainedModels models;
  if (ckpt.method == "static")
    models.static_basis = std::make_shared<const BasisSet>(basis_from_checkpoint(ckpt));
  else if (ckpt.method == "temporal")
    models.temporal_basis = std::make_shared<const BasisSet>(basis_from_checkpoint(ckpt));
  else if (ckpt.method == "dynamic")
    models.dynamic_basis = std::make_shared<const BasisSet>(basis_from_checkpoint(ckpt));
  else if (ckpt.method == "conditional")
    models.conditional = std::make_shared<const Mlp>(mlp_from_checkpoint(ckpt));
  else
    models.unconditional = std::make_shared<const Mlp>(mlp_from_checkpoint(ckpt));
  if (ckpt.method == "classifier_guided") {
    // negatives are the training family; reproduce it from the recorded seeds
    const std::uint64_t cell_seed = cfg.run.seeds.front();
    Rng cell = Rng(cfg.run.seed).split("cell", cell_seed);
    const SplitFamily family = make_splits(cfg.dataset.n_train_arcs, cfg.dataset.n_mixtures,
                                           Rng(cfg.run.seed).split("splits"));
    for (std::size_t i = 0; i < family.td.size(); ++i)
      models.train_data.push_back(
          sample_arc(family.td[i], cfg.dataset.shots, cell.split("train-data", i)));
  }

  Dataset shots;
  ConditioningCode code{0.0};
  bool have_shots = false;
  if (opt.shots_csv) {
    shots.samples = read_samples_csv(*opt.shots_csv);
    shots.provenance = *opt.shots_csv;
    if (shots.count() == 0) throw ConfigError("shots file has no samples: " + *opt.shots_csv);
    code = code_from_samples(shots.samples);
    have_shots = true;
  } else if (opt.split) {
    const SplitFamily family = make_splits(cfg.dataset.n_train_arcs, cfg.dataset.n_mixtures,
                                           Rng(cfg.run.seed).split("splits"));
    const TargetSpec target = make_target(family, split_from_name(*opt.split), opt.split_index);
    shots = target.draw(opt.shots_m.value_or(cfg.dataset.shots), Rng(opt.seed).split("shots"));
    code = target.code;
    have_shots = true;
  }
  if (method_needs_shots(ckpt.method) && !have_shots)
    throw ConfigError("method '" + ckpt.method + "' requires a shot set (--shots or --split)");

  DenseMatrix generated(0, ckpt.n);
  if (opt.m_out > 0) {
    const Sampler sampler = make_method_sampler(ckpt.method, models, cfg, shots, code,
                                                Rng(opt.seed).split("adapt"));
    generated =
        sampler.generate(opt.m_out, Rng(opt.seed).split("gen"), {cfg.integrator.steps, 1.0});
  }
  write_samples_csv(opt.out_csv, generated);
  if (opt.svg_path)
    write_scatter_svg(*opt.svg_path, have_shots ? shots.samples : DenseMatrix(0, ckpt.n),
                      generated, ckpt.method);
  return 0;
}

struct EvalOptions {
  std::string real_csv;
  std::string generated_csv;
  std::size_t kappa = 3;
  std::string out_csv;
  std::string method = "unknown";
  std::string split = "TD";
  std::uint64_t seed = 0;
};

inline int cmd_eval(const EvalOptions& opt) {
  const DenseMatrix real = read_samples_csv(opt.real_csv);
  const DenseMatrix generated = read_samples_csv(opt.generated_csv);
  const auto [prec, rec] = precision_recall(real, generated, opt.kappa);
  const bool fresh = !std::filesystem::exists(opt.out_csv);
  std::ofstream out(opt.out_csv, std::ios::app);
  if (!out) throw CsvError("cannot open for appending: " + opt.out_csv);
  if (fresh) out << "method,split,seed,precision,recall,gen_seconds\n";
  out << opt.method << ',' << opt.split << ',' << opt.seed << ',' << csv::format_double(prec)
      << ',' << csv::format_double(rec) << ",0\n";
  return 0;
}

struct BenchmarkOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

inline int cmd_benchmark(const BenchmarkOptions& opt) {
  ExperimentConfig cfg = parse_config_file(opt.config_path);
  if (opt.seed) cfg.run.seed = *opt.seed;
  if (opt.out_dir) cfg.run.out_dir = *opt.out_dir;
  std::filesystem::create_directories(cfg.run.out_dir);
  const BenchmarkOutput out = run_benchmark(cfg, cfg.run.out_dir);
  write_report_csv(cfg.run.out_dir + "/report.csv", out.reports);
  write_aggregate_csv(cfg.run.out_dir + "/aggregate.csv", out.aggregates);
  {
    std::ofstream resolved(cfg.run.out_dir + "/config_resolved.txt");
    resolved << config_to_text(cfg);
  }
  bool any_ok = false;
  for (const MetricReport& r : out.reports) any_ok |= !r.failed;
  if (!any_ok) {
    std::cerr << "benchmark: every cell failed";
    if (!out.reports.empty()) std::cerr << " (first error: " << out.reports.front().error << ")";
    std::cerr << "\n";
    return 3;
  }
  return 0;
}

struct SweepOptions {
  std::string config_path;
  std::string axis;
  std::vector<double> values;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

inline int cmd_sweep(const SweepOptions& opt) {
  ExperimentConfig cfg = parse_config_file(opt.config_path);
  if (opt.seed) cfg.run.seed = *opt.seed;
  if (opt.out_dir) cfg.run.out_dir = *opt.out_dir;
  std::filesystem::create_directories(cfg.run.out_dir);
  const std::vector<SweepCell> cells = run_sweep(cfg, opt.axis, opt.values, cfg.run.out_dir);
  write_sweep_csv(cfg.run.out_dir + "/sweep.csv", opt.axis, cells);
  bool any_ok = false;
  for (const SweepCell& cell : cells)
    for (const MetricReport& r : cell.output.reports) any_ok |= !r.failed;
  return any_ok ? 0 : 3;
}

}  // namespace fpfm
