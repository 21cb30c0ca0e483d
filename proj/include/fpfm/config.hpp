#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpfm/basis.hpp"
#include "fpfm/dynamic.hpp"
#include "fpfm/mlp.hpp"

namespace fpfm {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Flat key = value file with one section per module. Unknown sections or
// keys are hard errors; a silent typo would quietly corrupt a sweep.
struct ExperimentConfig {
  struct DatasetCfg {
    std::size_t n_train_arcs = 8;
    std::size_t n_mixtures = 8;
    std::size_t shots = 500;
  } dataset;

  TrainConfig train;      // basis networks and baseline nets share these
  DynamicConfig dynamic;  // lambda is taken from train.lambda

  struct IntegratorCfg {
    std::size_t steps = 100;
  } integrator;

  struct GuidanceCfg {
    double alpha = 5.0;
  } guidance;

  struct BaselineCfg {
    std::size_t finetune_steps = 1000;
    std::size_t backward_steps = 1000;
  } baseline;

  struct EvalCfg {
    std::size_t kappa = 3;
    std::size_t eval_samples = 1000;
    std::size_t m_eval = 1024;
    std::size_t timing_batch = 512;
    std::size_t timing_reps = 3;
    std::string reference = "fresh";  // fresh | shots
  } eval;

  struct RunCfg {
    std::vector<std::string> methods = {"static", "temporal", "dynamic"};
    std::vector<std::string> splits = {"TD", "UD", "US"};
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::uint64_t seed = 0;
    std::string out_dir = "out";
  } run;
};

namespace detail {

inline const std::set<std::string>& known_methods() {
  static const std::set<std::string> methods = {
      "static",      "temporal",          "dynamic",  "unconditional",
      "conditional", "classifier_guided", "distribution_guided", "finetune"};
  return methods;
}

struct ConfigParser {
  std::map<std::string, std::map<std::string, std::string>> values;

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  void parse(const std::string& text) {
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
        section = trim(t.substr(1, t.size() - 2));
        values[section];
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value, got '" +
                          t + "'");
      const std::string key = trim(t.substr(0, eq));
      const std::string val = trim(t.substr(eq + 1));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      if (section.empty())
        throw ConfigError("line " + std::to_string(lineno) + ": key '" + key +
                          "' outside any [section]");
      values[section][key] = val;
    }
  }

  // typed accessors; each consumes the key so leftovers can be reported
  bool take(const std::string& sec, const std::string& key, std::string& out) {
    auto s = values.find(sec);
    if (s == values.end()) return false;
    auto k = s->second.find(key);
    if (k == s->second.end()) return false;
    out = k->second;
    s->second.erase(k);
    return true;
  }
  void get(const std::string& sec, const std::string& key, std::string& field) {
    std::string v;
    if (take(sec, key, v)) field = v;
  }
  template <typename UInt>
  void get_count(const std::string& sec, const std::string& key, UInt& field) {
    std::string v;
    if (!take(sec, key, v)) return;
    try {
      const long long parsed = std::stoll(v);
      if (parsed < 0) throw ConfigError("[" + sec + "] " + key + " must be >= 0");
      field = static_cast<UInt>(parsed);
    } catch (const ConfigError&) {
      throw;
    } catch (...) {
      throw ConfigError("[" + sec + "] " + key + ": not an integer: '" + v + "'");
    }
  }
  void get_double(const std::string& sec, const std::string& key, double& field) {
    std::string v;
    if (!take(sec, key, v)) return;
    try {
      field = std::stod(v);
    } catch (...) {
      throw ConfigError("[" + sec + "] " + key + ": not a number: '" + v + "'");
    }
  }
  void get_bool(const std::string& sec, const std::string& key, bool& field) {
    std::string v;
    if (!take(sec, key, v)) return;
    if (v == "true" || v == "1")
      field = true;
    else if (v == "false" || v == "0")
      field = false;
    else
      throw ConfigError("[" + sec + "] " + key + ": expected true/false, got '" + v + "'");
  }
  static std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
      if (c == ',') {
        if (!ConfigParser::trim(cur).empty()) out.push_back(ConfigParser::trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
  }

  void report_unknown() const {
    for (const auto& [sec, kv] : values) {
      static const std::set<std::string> sections = {"dataset",  "train",    "dynamic",
                                                     "integrator", "guidance", "baseline",
                                                     "eval",     "run"};
      if (!sections.count(sec)) throw ConfigError("unknown section [" + sec + "]");
      for (const auto& [key, val] : kv)
        throw ConfigError("unknown key '" + key + "' in section [" + sec + "]");
    }
  }
};

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
  detail::ConfigParser p;
  p.parse(text);
  ExperimentConfig cfg;

  p.get_count("dataset", "n_train_arcs", cfg.dataset.n_train_arcs);
  p.get_count("dataset", "n_mixtures", cfg.dataset.n_mixtures);
  p.get_count("dataset", "shots", cfg.dataset.shots);

  p.get_count("train", "k", cfg.train.k);
  p.get_count("train", "width", cfg.train.width);
  p.get_count("train", "depth", cfg.train.depth);
  p.get_count("train", "gradient_steps", cfg.train.gradient_steps);
  p.get_count("train", "batch_size", cfg.train.batch_size);
  p.get_count("train", "dist_minibatch", cfg.train.dist_minibatch);
  p.get_double("train", "lr", cfg.train.lr);
  p.get_double("train", "lambda", cfg.train.lambda);
  p.get_bool("train", "residual_mode", cfg.train.residual_mode);
  p.get_bool("train", "detach_coefficients", cfg.train.detach_coefficients);
  {
    std::string act;
    if (p.take("train", "activation", act)) {
      try {
        cfg.train.activation = activation_from_name(act);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[train] activation: ") + e.what());
      }
    }
  }

  p.get_double("dynamic", "t_clamp_eps", cfg.dynamic.t_clamp_eps);
  p.get_count("dynamic", "anchor_subsample", cfg.dynamic.anchor_subsample);
  p.get_double("dynamic", "min_ess", cfg.dynamic.min_ess);

  p.get_count("integrator", "steps", cfg.integrator.steps);
  p.get_double("guidance", "alpha", cfg.guidance.alpha);
  p.get_count("baseline", "finetune_steps", cfg.baseline.finetune_steps);
  p.get_count("baseline", "backward_steps", cfg.baseline.backward_steps);

  p.get_count("eval", "kappa", cfg.eval.kappa);
  p.get_count("eval", "eval_samples", cfg.eval.eval_samples);
  p.get_count("eval", "m_eval", cfg.eval.m_eval);
  p.get_count("eval", "timing_batch", cfg.eval.timing_batch);
  p.get_count("eval", "timing_reps", cfg.eval.timing_reps);
  p.get("eval", "reference", cfg.eval.reference);

  {
    std::string v;
    if (p.take("run", "methods", v)) cfg.run.methods = detail::ConfigParser::split_list(v);
    if (p.take("run", "splits", v)) cfg.run.splits = detail::ConfigParser::split_list(v);
    if (p.take("run", "seeds", v)) {
      cfg.run.seeds.clear();
      for (const std::string& s : detail::ConfigParser::split_list(v)) {
        try {
          cfg.run.seeds.push_back(std::stoull(s));
        } catch (...) {
          throw ConfigError("[run] seeds: not an integer: '" + s + "'");
        }
      }
    }
  }
  p.get_count("run", "seed", cfg.run.seed);
  p.get("run", "out_dir", cfg.run.out_dir);

  p.report_unknown();

  // validation
  if (cfg.dataset.n_train_arcs < 2) throw ConfigError("[dataset] n_train_arcs must be >= 2");
  if (cfg.dataset.shots < 1) throw ConfigError("[dataset] shots must be >= 1");
  if (cfg.train.k < 1) throw ConfigError("[train] k must be >= 1");
  if (cfg.train.batch_size < 1) throw ConfigError("[train] batch_size must be >= 1");
  if (!(cfg.train.lr > 0.0)) throw ConfigError("[train] lr must be > 0");
  if (cfg.train.lambda < 0.0) throw ConfigError("[train] lambda must be >= 0");
  if (!(cfg.dynamic.t_clamp_eps > 0.0 && cfg.dynamic.t_clamp_eps < 1.0))
    throw ConfigError("[dynamic] t_clamp_eps must be in (0, 1)");
  if (cfg.dynamic.anchor_subsample < 1)
    throw ConfigError("[dynamic] anchor_subsample must be >= 1");
  if (cfg.integrator.steps < 1) throw ConfigError("[integrator] steps must be >= 1");
  if (cfg.guidance.alpha < 0.0) throw ConfigError("[guidance] alpha must be >= 0");
  if (cfg.eval.kappa < 1) throw ConfigError("[eval] kappa must be >= 1");
  if (cfg.eval.eval_samples <= cfg.eval.kappa)
    throw ConfigError("[eval] eval_samples must exceed kappa");
  if (cfg.eval.reference != "fresh" && cfg.eval.reference != "shots")
    throw ConfigError("[eval] reference must be 'fresh' or 'shots'");
  if (cfg.run.methods.empty()) throw ConfigError("[run] methods must not be empty");
  for (const std::string& m : cfg.run.methods)
    if (!detail::known_methods().count(m)) throw ConfigError("[run] unknown method '" + m + "'");
  if (cfg.run.splits.empty()) throw ConfigError("[run] splits must not be empty");
  for (const std::string& s : cfg.run.splits)
    if (s != "TD" && s != "UD" && s != "US")
      throw ConfigError("[run] unknown split '" + s + "'");
  if (cfg.run.seeds.empty()) throw ConfigError("[run] seeds must not be empty");
  cfg.dynamic.lambda = cfg.train.lambda;
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline std::string config_to_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[dataset]\n";
  o << "n_train_arcs = " << c.dataset.n_train_arcs << "\n";
  o << "n_mixtures = " << c.dataset.n_mixtures << "\n";
  o << "shots = " << c.dataset.shots << "\n\n";
  o << "[train]\n";
  o << "k = " << c.train.k << "\n";
  o << "width = " << c.train.width << "\n";
  o << "depth = " << c.train.depth << "\n";
  o << "activation = " << activation_name(c.train.activation) << "\n";
  o << "gradient_steps = " << c.train.gradient_steps << "\n";
  o << "batch_size = " << c.train.batch_size << "\n";
  o << "dist_minibatch = " << c.train.dist_minibatch << "\n";
  o << "lr = " << c.train.lr << "\n";
  o << "lambda = " << c.train.lambda << "\n";
  o << "residual_mode = " << (c.train.residual_mode ? "true" : "false") << "\n";
  o << "detach_coefficients = " << (c.train.detach_coefficients ? "true" : "false") << "\n\n";
  o << "[dynamic]\n";
  o << "t_clamp_eps = " << c.dynamic.t_clamp_eps << "\n";
  o << "anchor_subsample = " << c.dynamic.anchor_subsample << "\n";
  o << "min_ess = " << c.dynamic.min_ess << "\n\n";
  o << "[integrator]\n";
  o << "steps = " << c.integrator.steps << "\n\n";
  o << "[guidance]\n";
  o << "alpha = " << c.guidance.alpha << "\n\n";
  o << "[baseline]\n";
  o << "finetune_steps = " << c.baseline.finetune_steps << "\n";
  o << "backward_steps = " << c.baseline.backward_steps << "\n\n";
  o << "[eval]\n";
  o << "kappa = " << c.eval.kappa << "\n";
  o << "eval_samples = " << c.eval.eval_samples << "\n";
  o << "m_eval = " << c.eval.m_eval << "\n";
  o << "timing_batch = " << c.eval.timing_batch << "\n";
  o << "timing_reps = " << c.eval.timing_reps << "\n";
  o << "reference = " << c.eval.reference << "\n\n";
  o << "[run]\n";
  o << "methods = ";
  for (std::size_t i = 0; i < c.run.methods.size(); ++i)
    o << (i ? "," : "") << c.run.methods[i];
  o << "\nsplits = ";
  for (std::size_t i = 0; i < c.run.splits.size(); ++i) o << (i ? "," : "") << c.run.splits[i];
  o << "\nseeds = ";
  for (std::size_t i = 0; i < c.run.seeds.size(); ++i) o << (i ? "," : "") << c.run.seeds[i];
  o << "\nseed = " << c.run.seed << "\n";
  // out_dir is run-local, not part of the semantic configuration
  return o.str();
}

}  // namespace fpfm
