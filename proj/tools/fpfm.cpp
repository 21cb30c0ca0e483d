#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fpfm/commands.hpp"

namespace {

int dispatch(int argc, char** argv) {
  CLI::App app{"Function-projection flow matching: train, adapt and evaluate "
               "sample-conditioned generative models on the 2D arcs benchmark"};
  app.require_subcommand(1);

  fpfm::TrainOptions train_opt;
  std::uint64_t seed_arg = 0;
  std::string out_arg;
  auto* train = app.add_subcommand("train", "Train models and write checkpoints");
  train->add_option("--config", train_opt.config_path, "Config file")->required();
  auto* train_seed = train->add_option("--seed", seed_arg, "Root seed override");
  auto* train_out = train->add_option("--out", out_arg, "Output directory override");

  fpfm::GenerateOptions gen_opt;
  std::string gen_split;
  std::size_t gen_steps = 0, gen_shots_m = 0;
  std::string gen_shots_csv, gen_svg;
  auto* gen = app.add_subcommand("generate", "Generate samples from a checkpoint");
  gen->add_option("--checkpoint", gen_opt.checkpoint_path, "Checkpoint file")->required();
  auto* o_shots = gen->add_option("--shots", gen_shots_csv, "Shot-set CSV for adaptation");
  auto* o_split = gen->add_option("--split", gen_split, "Synthesize shots from TD|UD|US");
  gen->add_option("--index", gen_opt.split_index, "Index within the split family");
  auto* o_shots_m = gen->add_option("--shots-m", gen_shots_m, "Synthesized shot count");
  gen->add_option("--m-out", gen_opt.m_out, "Number of samples to generate");
  gen->add_option("--seed", gen_opt.seed, "Seed");
  gen->add_option("--out", gen_opt.out_csv, "Output CSV")->required();
  auto* o_svg = gen->add_option("--svg", gen_svg, "Also write a scatter SVG");
  auto* o_steps = gen->add_option("--steps", gen_steps, "Integrator steps override");

  fpfm::EvalOptions eval_opt;
  auto* eval = app.add_subcommand("eval", "Precision/recall of generated vs real CSV");
  eval->add_option("--real", eval_opt.real_csv, "Real samples CSV")->required();
  eval->add_option("--generated", eval_opt.generated_csv, "Generated samples CSV")->required();
  eval->add_option("--kappa", eval_opt.kappa, "Nearest-neighbor order");
  eval->add_option("--out", eval_opt.out_csv, "Report CSV to append to")->required();
  eval->add_option("--method", eval_opt.method, "Method label");
  eval->add_option("--split", eval_opt.split, "Split label");
  eval->add_option("--seed", eval_opt.seed, "Seed label");

  fpfm::BenchmarkOptions bench_opt;
  auto* bench = app.add_subcommand("benchmark", "Run the full methods x splits x seeds grid");
  bench->add_option("--config", bench_opt.config_path, "Config file")->required();
  auto* bench_seed = bench->add_option("--seed", seed_arg, "Root seed override");
  auto* bench_out = bench->add_option("--out", out_arg, "Output directory override");

  fpfm::SweepOptions sweep_opt;
  auto* sweep = app.add_subcommand("sweep", "Ablation sweep over shots or basis_count");
  sweep->add_option("--config", sweep_opt.config_path, "Config file")->required();
  sweep->add_option("--axis", sweep_opt.axis, "shots | basis_count")->required();
  sweep->add_option("--values", sweep_opt.values, "Axis values")->required()->delimiter(',');
  auto* sweep_seed = sweep->add_option("--seed", seed_arg, "Root seed override");
  auto* sweep_out = sweep->add_option("--out", out_arg, "Output directory override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*train) {
    if (*train_seed) train_opt.seed = seed_arg;
    if (*train_out) train_opt.out_dir = out_arg;
    return fpfm::cmd_train(train_opt);
  }
  if (*gen) {
    if (*o_shots) gen_opt.shots_csv = gen_shots_csv;
    if (*o_split) gen_opt.split = gen_split;
    if (*o_shots_m) gen_opt.shots_m = gen_shots_m;
    if (*o_steps) gen_opt.steps = gen_steps;
    if (*o_svg) gen_opt.svg_path = gen_svg;
    return fpfm::cmd_generate(gen_opt);
  }
  if (*eval) return fpfm::cmd_eval(eval_opt);
  if (*bench) {
    if (*bench_seed) bench_opt.seed = seed_arg;
    if (*bench_out) bench_opt.out_dir = out_arg;
    return fpfm::cmd_benchmark(bench_opt);
  }
  if (*sweep) {
    if (*sweep_seed) sweep_opt.seed = seed_arg;
    if (*sweep_out) sweep_opt.out_dir = out_arg;
    return fpfm::cmd_sweep(sweep_opt);
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const fpfm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fpfm::CsvError& e) {
    std::cerr << "csv error: " << e.what() << "\n";
    return 2;
  } catch (const fpfm::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
}
