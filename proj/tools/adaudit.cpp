#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "adaudit/commands.hpp"

namespace {

using namespace adaudit;

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// "name", "name:param" or an inline JSON object.
ReportStrategy parse_report_arg(const std::string& s) {
  if (!s.empty() && s.front() == '{') return report_from_json(json::parse(s));
  const auto colon = s.find(':');
  if (colon == std::string::npos) return report_from_json(json(s));
  const std::string name = s.substr(0, colon);
  const double param = std::stod(s.substr(colon + 1));
  if (name == "markup") return report_from_json({{"kind", "markup"}, {"value", param}});
  if (name == "markdown") return report_from_json({{"kind", "markdown"}, {"theta", param}});
  throw ValidationError("report strategy '" + name + "' takes no parameter");
}

AgentSet parse_alive(const std::string& s, int k) {
  if (s.empty()) return AgentSet::all(k);
  AgentSet out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const int a = std::stoi(tok);
    if (a < 1 || a > k) throw ValidationError("--alive: agent " + tok + " outside 1.." + std::to_string(k));
    out.insert(a);
  }
  return out;
}

std::vector<int> parse_grid(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Repeated non-monetary allocation with audits: simulator and analysis"};
  app.require_subcommand(1);

  std::string config_path, out_dir, grid, report_arg = "markup:1", flag_arg = "well_behaved";
  std::string scenario_arg, alive_arg;
  long long seed = -1;
  int reps = 0, agent = 1, K = 0, T = 0;
  long mc = 0;
  bool emit_traces = false, force = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "Experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "Override base_seed");
    sub->add_option("--reps", reps, "Override replication count n");
    sub->add_option("--out", out_dir, "Override output directory");
  };

  auto* run = app.add_subcommand("run", "Run replications; write metrics.csv and summary.json");
  add_common(run);
  run->add_flag("--emit-traces", emit_traces, "Also write trace_<seed>.ndjson per replication");
  run->add_flag("--force", force, "Overwrite outputs of a different config");

  auto* sweep = app.add_subcommand("sweep", "Audit counts over a geometric horizon grid");
  add_common(sweep);
  sweep->add_option("--grid", grid, "Comma-separated horizons, e.g. 2000,20000,200000");

  auto* dev = app.add_subcommand("deviation", "Paired unilateral deviation gain");
  add_common(dev);
  dev->add_option("--agent", agent, "Deviating agent (1-based)");
  dev->add_option("--report", report_arg, "Deviant report strategy (name, name:param or JSON)");
  dev->add_option("--flag", flag_arg, "Deviant flag strategy");

  auto* fair = app.add_subcommand("fairshare", "Exact and Monte Carlo fair shares");
  fair->add_option("scenario", scenario_arg, "Library scenario name or config path")->required();
  fair->add_option("--K", K, "Agent count for parametric library scenarios");
  fair->add_option("--T", T, "Horizon for T-dependent library scenarios");
  fair->add_option("--alive", alive_arg, "Comma-separated alive agents (default: all)");
  fair->add_option("--mc", mc, "Also estimate by Monte Carlo with this many draws");
  fair->add_option("--seed", seed, "Monte Carlo seed");

  auto* couple = app.add_subcommand("couple", "Coupling check between AdaAudit and the auxiliary game");
  add_common(couple);

  auto* list = app.add_subcommand("scenarios", "List the built-in scenario library");

  CLI11_PARSE(app, argc, argv);

  try {
    auto load = [&] {
      ExperimentConfig cfg = load_config(config_path);
      if (seed >= 0) cfg.base_seed = static_cast<std::uint64_t>(seed);
      if (reps > 0) cfg.n = reps;
      if (!out_dir.empty()) cfg.out = out_dir;
      return cfg;
    };
    if (*run) return commands::run(load(), {emit_traces, force}, std::cout);
    if (*sweep) {
      ExperimentConfig cfg = load();
      if (!grid.empty()) cfg.t_grid = parse_grid(grid);
      return commands::sweep(cfg, std::cout);
    }
    if (*dev) {
      return commands::deviation(load(), agent, parse_report_arg(report_arg),
                                 flag_from_json(json(flag_arg)), std::cout);
    }
    if (*fair) {
      std::optional<ScenarioSpec> sc;
      if (find_scenario(scenario_arg)) {
        sc = library_scenario(scenario_arg, K > 0 ? std::optional<int>(K) : std::nullopt,
                              T > 0 ? std::optional<int>(T) : std::nullopt);
      } else {
        sc = load_config(scenario_arg).scenario;
      }
      return commands::fairshare(*sc, parse_alive(alive_arg, sc->K()), mc,
                                 seed >= 0 ? static_cast<std::uint64_t>(seed) : 0, std::cout);
    }
    if (*couple) return commands::couple(load(), std::cout);
    if (*list) return commands::scenarios(std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
