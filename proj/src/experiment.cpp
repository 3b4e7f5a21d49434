#include "opeval/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "opeval/benchmarks.hpp"
#include "opeval/dataset.hpp"
#include "opeval/diagnostics.hpp"
#include "opeval/estimators.hpp"
#include "opeval/features.hpp"
#include "opeval/synthetic.hpp"
#include "opeval/text_io.hpp"

namespace opeval {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str(), path.string());
}

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.raw_ = text;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": key outside any [section]");
    }
    if (cfg.sections_[section].count(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    cfg.sections_[section][key] = Entry{value, line_no};
  }
  return cfg;
}

const ConfigFile::Entry* ConfigFile::find(const std::string& section,
                                          const std::string& key) const {
  const auto sec = sections_.find(section);
  if (sec == sections_.end()) return nullptr;
  const auto it = sec->second.find(key);
  return it == sec->second.end() ? nullptr : &it->second;
}

void ConfigFile::fail(const std::string& section, const std::string& key,
                      const std::string& what) const {
  const Entry* e = find(section, key);
  const std::string at = e ? origin_ + ":" + std::to_string(e->line) : origin_;
  throw ConfigError(at + ": [" + section + "] " + key + ": " + what);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

std::string ConfigFile::require_string(const std::string& section, const std::string& key) const {
  const Entry* e = find(section, key);
  if (!e) throw ConfigError(origin_ + ": missing required key [" + section + "] " + key);
  return e->value;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  const Entry* e = find(section, key);
  return e ? e->value : fallback;
}

double ConfigFile::require_double(const std::string& section, const std::string& key) const {
  const std::string v = require_string(section, key);
  try {
    return parse_double(v);
  } catch (const std::exception&) {
    fail(section, key, "not a number: '" + v + "'");
  }
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  if (!has(section, key)) return fallback;
  return require_double(section, key);
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = require_string(section, key);
  try {
    std::size_t pos = 0;
    const int out = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    fail(section, key, "not an integer: '" + v + "'");
  }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = require_string(section, key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(section, key, "expected true/false");
}

std::uint64_t ConfigFile::get_u64(const std::string& section, const std::string& key,
                                  std::uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = require_string(section, key);
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    fail(section, key, "not an unsigned integer: '" + v + "'");
  }
}

std::vector<double> ConfigFile::get_doubles(const std::string& section, const std::string& key,
                                            const std::vector<double>& fallback) const {
  if (!has(section, key)) return fallback;
  const std::string v = require_string(section, key);
  std::istringstream ss(v);
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    try {
      out.push_back(parse_double(tok));
    } catch (const std::exception&) {
      fail(section, key, "not a number: '" + tok + "'");
    }
  }
  if (out.empty()) fail(section, key, "expected at least one number");
  return out;
}

std::uint64_t ConfigFile::hash() const { return fnv1a_hash(raw_); }

Mode parse_mode(const std::string& name) {
  if (name == "simulate") return Mode::Simulate;
  if (name == "evaluate") return Mode::Evaluate;
  if (name == "diagnose") return Mode::Diagnose;
  if (name == "sweep") return Mode::Sweep;
  if (name == "compare") return Mode::Compare;
  throw ConfigError("unknown mode '" + name + "'");
}

ComparisonVerdict compare_policies(double rmse, double value_gap) {
  ComparisonVerdict v;
  v.rmse = rmse;
  v.value_gap = value_gap;
  v.verdict = rmse < value_gap ? Verdict::Distinguishable : Verdict::Indistinguishable;
  return v;
}

std::string plot_script_text(const std::vector<std::string>& csv_names,
                             const std::vector<std::string>& labels, PlotLayout layout,
                             const std::string& out_image) {
  if (csv_names.empty() || csv_names.size() != labels.size()) {
    throw std::invalid_argument("plot script needs matching csv and label lists");
  }
  std::ostringstream out;
  out << "#!/usr/bin/env python3\n";
  out << "# Renders curves emitted next to this script.\n";
  out << "import csv\n";
  out << "import os\n";
  out << "import matplotlib\n";
  out << "matplotlib.use(\"Agg\")\n";
  out << "import matplotlib.pyplot as plt\n\n";
  out << "HERE = os.path.dirname(os.path.abspath(__file__))\n\n";
  out << "def read_columns(name, cols):\n";
  out << "    with open(os.path.join(HERE, name)) as fh:\n";
  out << "        rows = [r for r in csv.DictReader(\n";
  out << "            line for line in fh if not line.startswith(\"#\"))]\n";
  out << "    return [[float(r[c]) for r in rows] for c in cols]\n\n";
  out << "SERIES = [\n";
  for (std::size_t i = 0; i < csv_names.size(); ++i) {
    out << "    (\"" << csv_names[i] << "\", \"" << labels[i] << "\"),\n";
  }
  out << "]\n\n";
  if (layout == PlotLayout::SinglePanel) {
    out << "fig, ax = plt.subplots(figsize=(6, 4))\n";
    out << "for name, label in SERIES:\n";
    out << "    x, y = read_columns(name, [\"round\", \"rmse\"])\n";
    out << "    ax.plot(x, y, label=label)\n";
    out << "ax.set_xlabel(\"rounds\")\n";
    out << "ax.set_ylabel(\"value estimate RMSE\")\n";
    out << "ax.set_yscale(\"log\")\n";
    out << "ax.legend()\n";
  } else {
    out << "fig, axes = plt.subplots(1, 2, figsize=(11, 4))\n";
    out << "for name, label in SERIES:\n";
    out << "    t, fro, err = read_columns(\n";
    out << "        name, [\"t\", \"mean_frobenius\", \"mean_estimation_error\"])\n";
    out << "    axes[0].plot(t, fro, label=label)\n";
    out << "    axes[1].plot(t, err, label=label)\n";
    out << "axes[0].set_xlabel(\"t\")\n";
    out << "axes[0].set_ylabel(\"mean Frobenius norm of the t-th operator power\")\n";
    out << "axes[0].set_yscale(\"log\")\n";
    out << "axes[1].set_xlabel(\"t\")\n";
    out << "axes[1].set_ylabel(\"mean weight estimation error\")\n";
    out << "axes[1].set_yscale(\"log\")\n";
    out << "axes[0].legend()\n";
  }
  out << "fig.tight_layout()\n";
  out << "fig.savefig(os.path.join(HERE, \"" << out_image << "\"), dpi=150)\n";
  out << "print(\"wrote " << out_image << "\")\n";
  return out.str();
}

void emit_plot_script(const std::filesystem::path& script_path,
                      const std::vector<std::string>& csv_names,
                      const std::vector<std::string>& labels, PlotLayout layout,
                      const std::string& out_image) {
  std::ofstream out(script_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + script_path.string());
  out << plot_script_text(csv_names, labels, layout, out_image);
}

namespace {

struct Workspace {
  ConfigFile cfg;
  std::filesystem::path out_dir;
  std::uint64_t master_seed = 0;
  std::uint64_t config_hash = 0;
  bool fast = false;
};

DiscountedMDP build_environment(const ConfigFile& cfg) {
  const std::string kind = cfg.get_string("environment", "kind", "random_dense");
  const double gamma = cfg.get_double("environment", "gamma", 0.95);
  const double noise = cfg.get_double("environment", "reward_noise_std", 0.0);
  const std::uint64_t env_seed = cfg.get_u64("environment", "env_seed", 7);
  if (kind == "random_dense") {
    return random_dense_mdp(cfg.get_int("environment", "num_states", 30),
                            cfg.get_int("environment", "num_actions", 2), gamma, env_seed, noise);
  }
  if (kind == "ergodic_chain") {
    return ergodic_chain(cfg.get_int("environment", "num_states", 10), gamma,
                         cfg.get_double("environment", "mixing", 0.05), noise);
  }
  if (kind == "two_room_gridworld") {
    return two_room_gridworld(cfg.get_int("environment", "width", 4),
                              cfg.get_int("environment", "height", 4), gamma,
                              cfg.get_double("environment", "slip", 0.1), noise);
  }
  if (kind == "file") {
    return DiscountedMDP::load(cfg.require_string("environment", "mdp_file"));
  }
  throw ConfigError("unknown environment kind '" + kind + "'");
}

Policy load_policy_file(const std::filesystem::path& path, const DiscountedMDP& mdp) {
  Policy pi;
  pi.action_of.assign(mdp.num_states(), 0);
  for (const auto& kv : read_kv_file(path)) {
    if (kv.key != "action") throw ConfigError("policy file: unknown key '" + kv.key + "'");
    pi.action_of.at(std::stoi(kv.fields.at(0))) = std::stoi(kv.fields.at(1));
  }
  mdp.check_policy(pi);
  return pi;
}

Policy greedy_from_q_file(const std::filesystem::path& path, const DiscountedMDP& mdp) {
  Mat q = Mat::Zero(mdp.num_states(), mdp.num_actions());
  for (const auto& kv : read_kv_file(path)) {
    if (kv.key != "q") throw ConfigError("q file: unknown key '" + kv.key + "'");
    q(std::stoi(kv.fields.at(0)), std::stoi(kv.fields.at(1))) = parse_double(kv.fields.at(2));
  }
  Policy pi;
  pi.action_of.resize(mdp.num_states());
  for (int s = 0; s < mdp.num_states(); ++s) {
    int best = 0;
    for (int a = 1; a < mdp.num_actions(); ++a) {
      if (q(s, a) > q(s, best)) best = a;
    }
    pi.action_of[s] = best;
  }
  return pi;
}

Policy build_policy(const ConfigFile& cfg, const DiscountedMDP& mdp) {
  const std::string kind = cfg.get_string("policy", "kind", "myopic");
  if (kind == "myopic") return myopic_policy(mdp);
  if (kind == "file") return load_policy_file(cfg.require_string("policy", "policy_file"), mdp);
  if (kind == "greedy_q") return greedy_from_q_file(cfg.require_string("policy", "q_file"), mdp);
  throw ConfigError("unknown policy kind '" + kind + "'");
}

FeatureMap build_features(const ConfigFile& cfg, const DiscountedMDP& mdp, const Policy& pi,
                          std::uint64_t feature_seed) {
  const std::string kind = cfg.get_string("features", "kind", "one_hot");
  if (kind == "one_hot") return one_hot_features(mdp);
  if (kind == "realizable_span") {
    const int dim = cfg.get_int("features", "dim", std::max(2, mdp.num_pairs() / 4));
    return make_span_realizable(mdp, pi, dim, feature_seed).features;
  }
  if (kind == "coverage_top_k") {
    const int k = cfg.get_int("features", "dim", std::max(1, mdp.num_pairs() / 2));
    const Vec mu = stationary_distribution(mdp, pi);
    return coverage_truncated_features(mdp.num_states(), mdp.num_actions(), mu, k);
  }
  if (kind == "rff") {
    RffConfig rff_cfg;
    rff_cfg.input_dim = mdp.num_states() + mdp.num_actions();
    rff_cfg.dim = cfg.get_int("features", "dim", 64);
    rff_cfg.bandwidth_scale = cfg.get_double("features", "rff_bandwidth_scale", 1.0);
    rff_cfg.median_pairs = cfg.get_int("features", "rff_median_pairs", 10000);
    rff_cfg.rescale_to_unit_norm = cfg.get_bool("features", "norm_enforced", true);
    const auto sample = all_state_action_encodings(mdp.num_states(), mdp.num_actions());
    const RffMap rff = fit_random_fourier_features(sample, rff_cfg, feature_seed);
    return rff_tabular_features(mdp.num_states(), mdp.num_actions(), rff);
  }
  throw ConfigError("unknown feature kind '" + kind + "'");
}

std::string ratio_label(double ratio) { return format_double(ratio); }

void run_simulate(const Workspace& ws) {
  SimConfig sim;
  sim.n_samples = ws.cfg.get_int("simulate", "n_samples", 100);
  sim.dim = ws.cfg.get_int("simulate", "dim", 100);
  sim.gamma = ws.cfg.get_double("simulate", "gamma", 0.99);
  sim.lambda_reg = ws.cfg.get_double("simulate", "lambda", 1e-4);
  sim.num_rounds = ws.cfg.get_int("simulate", "num_rounds", 100);
  sim.repetitions = ws.cfg.get_int("simulate", "repetitions", 100);
  sim.reward_noise_std = ws.cfg.get_double("simulate", "reward_noise_std", 0.0);
  sim.master_seed = ws.master_seed;
  if (ws.fast) sim.repetitions = std::min(sim.repetitions, 20);
  if (sim.lambda_reg <= 0.0) throw ConfigError("[simulate] lambda must be > 0");

  const SimCurves curves = run_simulation(sim);
  CsvWriter csv({"t", "mean_frobenius", "mean_estimation_error", "saturated"});
  csv.set_provenance(ws.master_seed, ws.config_hash);
  for (std::size_t t = 0; t < curves.mean_frobenius.size(); ++t) {
    csv.add_row({std::to_string(t + 1), format_double(curves.mean_frobenius[t]),
                 format_double(curves.mean_estimation_error[t]),
                 curves.saturated[t] ? "1" : "0"});
  }
  csv.write(ws.out_dir / "sim_curves.csv");
  emit_plot_script(ws.out_dir / "plot_sim.py", {"sim_curves.csv"},
                   {"N=" + std::to_string(sim.n_samples)}, PlotLayout::SimPanels, "sim_curves.png");
}

struct EvaluateContext {
  DiscountedMDP mdp;
  Policy pi;
  ValueTable values;
  FeatureMap fmap;
  EvalSet eval;
  std::vector<double> lambdas;
  int num_rounds;
  int record_every;
  int n_target;
  int episode_len;
};

EvaluateContext make_evaluate_context(const Workspace& ws) {
  DiscountedMDP mdp = build_environment(ws.cfg);
  Policy pi = build_policy(ws.cfg, mdp);
  mdp.check_policy(pi);
  ValueTable values = exact_q_value(mdp, pi);
  const std::uint64_t feature_seed =
      ws.cfg.has("features", "feature_seed")
          ? ws.cfg.get_u64("features", "feature_seed", 0)
          : derive_seed(ws.master_seed, 2);
  FeatureMap fmap = build_features(ws.cfg, mdp, pi, feature_seed);
  const int num_eval_states = ws.cfg.get_int("eval", "num_eval_states", 100);
  EvalSet eval = make_eval_set(mdp, pi, fmap, values, num_eval_states,
                               derive_seed(ws.master_seed, 3));
  EvaluateContext ctx{std::move(mdp),  std::move(pi),   std::move(values),
                      std::move(fmap), std::move(eval), {},
                      0,               0,               0,
                      0};
  ctx.lambdas = ws.cfg.get_doubles("estimator", "lambdas", {1e-1, 1e-2, 1e-3, 1e-4, 1e-8});
  for (double lam : ctx.lambdas) {
    if (lam <= 0.0) throw ConfigError("[estimator] lambdas must all be > 0");
  }
  ctx.num_rounds = ws.cfg.get_int("estimator", "num_rounds", 100);
  ctx.record_every = ws.cfg.get_int("estimator", "record_every", 10);
  ctx.n_target = ws.cfg.get_int("dataset", "n_target", 100000);
  if (ws.fast) ctx.n_target = std::min(ctx.n_target, 20000);
  ctx.episode_len = ws.cfg.get_int("dataset", "episode_len", 100);
  if (ctx.n_target < 1) throw ConfigError("[dataset] n_target must be >= 1");
  return ctx;
}

void run_evaluate(const Workspace& ws) {
  EvaluateContext ctx = make_evaluate_context(ws);
  std::vector<double> ratios = ws.cfg.get_doubles("dataset", "mix_ratios", {0.0, 0.5, 1.0, 2.0});
  for (double r : ratios) {
    if (r < 0.0) throw ConfigError("[dataset] mix_ratios must be non-negative");
  }

  const TransitionDataset base =
      sample_offline_dataset(ctx.mdp, &ctx.pi, {SourceKind::Target, -1}, ctx.n_target,
                             derive_seed(ws.master_seed, 0), ctx.episode_len);
  const double max_ratio = *std::max_element(ratios.begin(), ratios.end());
  TransitionDataset extra;
  if (max_ratio > 0.0) {
    const int need = static_cast<int>(std::ceil(max_ratio * ctx.n_target));
    extra = sample_offline_dataset(ctx.mdp, nullptr, {SourceKind::Random, -1}, need,
                                   derive_seed(ws.master_seed, 1), ctx.episode_len);
  }

  CsvWriter summary({"ratio", "n_total", "best_lambda", "final_rmse"});
  summary.set_provenance(ws.master_seed, ws.config_hash);
  std::vector<std::string> csv_names;
  std::vector<std::string> labels;
  for (double ratio : ratios) {
    const TransitionDataset data = ratio == 0.0 ? base : mix_datasets(base, extra, ratio);
    const SweepResult sweep =
        hyperparameter_sweep(data, ctx.fmap, ctx.pi, ctx.mdp.gamma(), ctx.lambdas,
                             ctx.num_rounds, ctx.record_every, ctx.eval);
    const FqiReport& best = sweep.reports[sweep.best_index];
    const std::string name = "rmse_mix_" + ratio_label(ratio) + ".csv";
    write_fqi_csv(best, ws.out_dir / name, ws.master_seed, ws.config_hash);
    csv_names.push_back(name);
    labels.push_back(ratio == 0.0 ? "target only" : "+" + ratio_label(ratio) + "x random");
    summary.add_row({ratio_label(ratio), std::to_string(data.size()),
                     format_double(sweep.lambdas[sweep.best_index]),
                     format_double(best.final_rmse)});
  }
  summary.write(ws.out_dir / "summary.csv");
  emit_plot_script(ws.out_dir / "plot_rmse.py", csv_names, labels, PlotLayout::SinglePanel,
                   "fqi_rmse.png");
}

void run_sweep(const Workspace& ws) {
  EvaluateContext ctx = make_evaluate_context(ws);
  const TransitionDataset data =
      sample_offline_dataset(ctx.mdp, &ctx.pi, {SourceKind::Target, -1}, ctx.n_target,
                             derive_seed(ws.master_seed, 0), ctx.episode_len);
  const SweepResult sweep = hyperparameter_sweep(data, ctx.fmap, ctx.pi, ctx.mdp.gamma(),
                                                 ctx.lambdas, ctx.num_rounds, ctx.record_every,
                                                 ctx.eval);
  CsvWriter summary({"lambda", "final_rmse", "best"});
  summary.set_provenance(ws.master_seed, ws.config_hash);
  std::vector<std::string> csv_names;
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < sweep.lambdas.size(); ++i) {
    const std::string name = "sweep_lambda_" + format_double(sweep.lambdas[i]) + ".csv";
    write_fqi_csv(sweep.reports[i], ws.out_dir / name, ws.master_seed, ws.config_hash);
    csv_names.push_back(name);
    labels.push_back("lambda=" + format_double(sweep.lambdas[i]));
    summary.add_row({format_double(sweep.lambdas[i]),
                     format_double(sweep.reports[i].final_rmse),
                     i == static_cast<std::size_t>(sweep.best_index) ? "1" : "0"});
  }
  summary.write(ws.out_dir / "sweep_summary.csv");
  emit_plot_script(ws.out_dir / "plot_sweep.py", csv_names, labels, PlotLayout::SinglePanel,
                   "sweep_rmse.png");
}

void run_diagnose(const Workspace& ws) {
  EvaluateContext ctx = make_evaluate_context(ws);
  const std::string dist = ws.cfg.get_string("diagnose", "data_dist", "stationary");
  Vec mu;
  if (dist == "stationary") {
    mu = stationary_distribution(ctx.mdp, ctx.pi);
  } else if (dist == "uniform") {
    mu = Vec::Constant(ctx.mdp.num_pairs(), 1.0 / ctx.mdp.num_pairs());
  } else {
    throw ConfigError("[diagnose] data_dist must be 'stationary' or 'uniform'");
  }

  const ShiftDiagnostics shift = shift_constants(ctx.mdp, ctx.fmap, ctx.pi, mu);
  const CompletenessReport completeness = completeness_residual(ctx.mdp, ctx.fmap, ctx.pi);
  const int max_power = ws.cfg.get_int("diagnose", "max_power", 10);
  std::vector<int> powers(max_power + 1);
  for (int t = 0; t <= max_power; ++t) powers[t] = t;
  const NonExpansionReport nonexp = non_expansiveness_check(
      ctx.mdp, ctx.fmap, ctx.pi, mu, powers, 20, derive_seed(ws.master_seed, 4));

  const int n_diag = ws.cfg.get_int("diagnose", "n_diag_samples", 5000);
  const TransitionDataset data =
      sample_offline_dataset(ctx.mdp, &ctx.pi, {SourceKind::Target, -1}, n_diag,
                             derive_seed(ws.master_seed, 0), ctx.episode_len);
  const double lambda = ctx.lambdas.empty() ? 1e-4 : ctx.lambdas.back();
  const CovarianceBundle bundle =
      build_covariance_bundle(data, ctx.fmap, ctx.pi, lambda, ctx.mdp.gamma());
  const SpectrumReport spectrum =
      amplification_spectrum(bundle, ctx.mdp.gamma(), ctx.num_rounds);

  CsvWriter summary({"c_policy", "c_init", "spectral_radius", "worst_completeness_residual",
                     "assumption3_ok"});
  summary.set_provenance(ws.master_seed, ws.config_hash);
  summary.add_row({format_double(shift.c_policy), format_double(shift.c_init),
                   format_double(spectrum.spectral_radius),
                   format_double(completeness.worst_residual),
                   shift.assumption_low_shift ? "1" : "0"});
  summary.write(ws.out_dir / "diagnostics_summary.csv");

  CsvWriter amp({"t", "frobenius_norm"});
  amp.set_provenance(ws.master_seed, ws.config_hash);
  for (std::size_t t = 0; t < spectrum.frobenius.size(); ++t) {
    amp.add_row({std::to_string(t + 1), format_double(spectrum.frobenius[t])});
  }
  amp.write(ws.out_dir / "amplification.csv");

  CsvWriter detail({"quantity", "value"});
  detail.set_provenance(ws.master_seed, ws.config_hash);
  detail.add_row({"worst_nonexpansion_violation", format_double(nonexp.worst_violation)});
  detail.add_row({"population_cov_singular", nonexp.lambda_singular ? "1" : "0"});
  detail.add_row({"rewards_in_unit_range", ctx.mdp.rewards_in_unit_range() ? "1" : "0"});
  detail.add_row({"empirical_cov_rcond", format_double(bundle.lambda_hat_rcond)});
  detail.write(ws.out_dir / "diagnostics_detail.csv");
}

void run_compare(const Workspace& ws) {
  EvaluateContext ctx = make_evaluate_context(ws);
  const std::vector<double> epsilons =
      ws.cfg.get_doubles("compare", "epsilons", {0.1, 0.2, 0.4, 0.6});
  const std::string value_kind = ws.cfg.get_string("compare", "value_estimator", "rollout");
  const int n_value_traj = ws.cfg.get_int("eval", "num_value_trajectories", 100);

  const auto lowers =
      lower_performance_policies(ctx.mdp, ctx.pi, epsilons, derive_seed(ws.master_seed, 50));
  const TransitionDataset base =
      sample_offline_dataset(ctx.mdp, &ctx.pi, {SourceKind::Target, -1}, ctx.n_target,
                             derive_seed(ws.master_seed, 0), ctx.episode_len);

  double target_value = ctx.values.scalar_value;
  int horizon = 1;
  if (value_kind == "rollout") {
    horizon = truncation_horizon(ctx.mdp.gamma(), std::max(1e-9, ctx.mdp.max_abs_reward()), 1e-8);
    target_value =
        monte_carlo_value(ctx.mdp, ctx.pi, n_value_traj, horizon, derive_seed(ws.master_seed, 70))
            .mean;
  } else if (value_kind != "exact") {
    throw ConfigError("[compare] value_estimator must be 'rollout' or 'exact'");
  }

  CsvWriter csv({"rank", "epsilon", "target_value", "lower_value", "value_gap", "rmse",
                 "verdict"});
  csv.set_provenance(ws.master_seed, ws.config_hash);
  for (std::size_t i = 0; i < lowers.size(); ++i) {
    const TransitionDataset sub = sample_offline_dataset(
        ctx.mdp, &lowers[i].policy, {SourceKind::LowerPerf, static_cast<int>(i)}, ctx.n_target,
        derive_seed(ws.master_seed, 60 + i), ctx.episode_len);
    const TransitionDataset mixed = mix_datasets(base, sub, 1.0);
    const SweepResult sweep =
        hyperparameter_sweep(mixed, ctx.fmap, ctx.pi, ctx.mdp.gamma(), ctx.lambdas,
                             ctx.num_rounds, ctx.record_every, ctx.eval);
    const double rmse = sweep.reports[sweep.best_index].final_rmse;

    double lower_value = lowers[i].exact_value;
    if (value_kind == "rollout") {
      lower_value = monte_carlo_value(ctx.mdp, lowers[i].policy, n_value_traj, horizon,
                                      derive_seed(ws.master_seed, 80 + i))
                        .mean;
    }
    const ComparisonVerdict verdict = compare_policies(rmse, target_value - lower_value);
    csv.add_row({std::to_string(i + 1), format_double(lowers[i].epsilon),
                 format_double(target_value), format_double(lower_value),
                 format_double(verdict.value_gap), format_double(verdict.rmse),
                 verdict.verdict == Verdict::Distinguishable ? "distinguishable"
                                                             : "indistinguishable"});
  }
  csv.write(ws.out_dir / "comparison.csv");
}

}  // namespace

void run_experiment(Mode mode, const RunOptions& options) {
  Workspace ws{ConfigFile::parse(options.config_path), options.out_dir, 0, 0, options.fast};
  const std::string cfg_mode = ws.cfg.get_string("experiment", "mode", "");
  if (!cfg_mode.empty() && parse_mode(cfg_mode) != mode) {
    throw ConfigError("config declares mode '" + cfg_mode + "' but another mode was requested");
  }
  ws.master_seed = options.seed_override.value_or(ws.cfg.get_u64("experiment", "master_seed", 0));
  ws.config_hash = ws.cfg.hash();
  std::filesystem::create_directories(ws.out_dir);

  switch (mode) {
    case Mode::Simulate:
      run_simulate(ws);
      break;
    case Mode::Evaluate:
      run_evaluate(ws);
      break;
    case Mode::Diagnose:
      run_diagnose(ws);
      break;
    case Mode::Sweep:
      run_sweep(ws);
      break;
    case Mode::Compare:
      run_compare(ws);
      break;
  }
}

}  // namespace opeval
