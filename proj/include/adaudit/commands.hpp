#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "adaudit/analysis.hpp"
#include "adaudit/config.hpp"
#include "adaudit/io.hpp"

// Implementation of the CLI subcommands. Every command writes its artifacts
// only after all replications have been aggregated.
namespace adaudit::commands {

namespace fs = std::filesystem;

struct RunOptions {
  bool emit_traces = false;
  bool force = false;  // overwrite outputs produced by a different config
};

namespace detail {

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << content;
}

// Refuses to clobber outputs of a different experiment unless forced.
// Returns the previous summary bytes when the hash matches.
inline std::optional<std::string> check_existing(const fs::path& summary, const std::string& hash,
                                                 bool force) {
  if (!fs::exists(summary)) return std::nullopt;
  const std::string old = slurp(summary);
  std::string old_hash;
  try {
    old_hash = json::parse(old).value("config_hash", "");
  } catch (const json::exception&) {
  }
  if (old_hash != hash) {
    if (!force) {
      throw Error(summary.string() + " was produced by config " + old_hash +
                  "; rerun with --force to overwrite");
    }
    return std::nullopt;
  }
  return old;
}

}  // namespace detail

inline int run(const ExperimentConfig& cfg, const RunOptions& opts, std::ostream& log) {
  const std::string hash = config_hash(canonical_json(cfg));
  const fs::path out(cfg.out);
  fs::create_directories(out);
  const auto previous = detail::check_existing(out / "summary.json", hash, opts.force);

  const EpisodeConfig base = cfg.episode();
  const int k = cfg.scenario.K();
  std::vector<MetricsRow> rows;
  if (opts.emit_traces) {
    auto traces = run_replications(base, cfg.n, cfg.base_seed);
    for (const Trace& tr : traces) {
      rows.push_back(metrics_of(tr, cfg.scenario));
      EpisodeConfig ec = base;
      ec.seed = tr.seed;
      std::ostringstream os;
      write_trace_ndjson(os, tr, ec);
      detail::spit(out / ("trace_" + std::to_string(tr.seed) + ".ndjson"), os.str());
    }
  } else {
    rows = metrics_replications(base, cfg.n, cfg.base_seed);
  }

  std::ostringstream csv;
  write_metrics_csv(csv, rows, k, hash, cfg.base_seed);
  detail::spit(out / "metrics.csv", csv.str());

  ordered_json summary;
  summary["config_hash"] = hash;
  summary["base_seed"] = cfg.base_seed;
  summary["scenario"] = cfg.scenario_label;
  summary["K"] = k;
  summary["T"] = cfg.scenario.T();
  summary["mechanism"] = mechanism_name(cfg.mechanism);
  summary["n"] = cfg.n;
  summary["metrics"] = metrics_summary(rows, k);
  summary["config"] = canonical_json(cfg);
  const std::string text = summary.dump(2) + "\n";
  detail::spit(out / "summary.json", text);

  const auto& m = summary["metrics"];
  log << "run " << cfg.scenario_label << " (" << mechanism_name(cfg.mechanism) << ", K=" << k
      << ", T=" << cfg.scenario.T() << ", n=" << cfg.n << ")\n"
      << "  regret  mean " << m["regret"]["mean"].get<double>() << " stderr "
      << m["regret"]["stderr"].get<double>() << "\n"
      << "  audits  mean " << m["audits"]["mean"].get<double>() << " stderr "
      << m["audits"]["stderr"].get<double>() << "\n"
      << "  config_hash " << hash << "\n";
  if (previous) log << "  " << (*previous == text ? "reproduced" : "CHANGED") << " previous summary\n";
  return 0;
}

inline int sweep(const ExperimentConfig& cfg, std::ostream& log) {
  const std::string hash = config_hash(canonical_json(cfg));
  const AuditGrowth g = audits_vs_logT(cfg.episode(), cfg.t_grid, cfg.n, cfg.base_seed);
  const fs::path out(cfg.out);
  fs::create_directories(out);

  std::ostringstream csv;
  csv << "# config_hash=" << hash << " base_seed=" << cfg.base_seed << "\n";
  csv << "T,mean_audits,stderr_audits,residual\n";
  ordered_json points = ordered_json::array();
  for (std::size_t i = 0; i < g.horizons.size(); ++i) {
    csv << g.horizons[i] << ',' << fmt_double(g.mean_audits[i]) << ','
        << fmt_double(g.stderr_audits[i]) << ',' << fmt_double(g.residuals[i]) << "\n";
    points.push_back({{"T", g.horizons[i]},
                      {"mean_audits", g.mean_audits[i]},
                      {"stderr_audits", g.stderr_audits[i]},
                      {"residual", g.residuals[i]}});
  }
  detail::spit(out / "sweep.csv", csv.str());

  ordered_json j;
  j["config_hash"] = hash;
  j["base_seed"] = cfg.base_seed;
  j["mechanism"] = mechanism_name(cfg.mechanism);
  j["n"] = cfg.n;
  j["slope_per_lnT"] = g.slope;
  j["intercept"] = g.intercept;
  j["points"] = points;
  detail::spit(out / "sweep.json", j.dump(2) + "\n");

  log << "sweep " << cfg.scenario_label << " (" << mechanism_name(cfg.mechanism) << ")\n";
  for (std::size_t i = 0; i < g.horizons.size(); ++i) {
    log << "  T=" << g.horizons[i] << "  mean audits " << g.mean_audits[i] << " +- "
        << g.stderr_audits[i] << "\n";
  }
  log << "  slope per ln T " << g.slope << "\n";
  return 0;
}

inline int deviation(const ExperimentConfig& cfg, AgentId agent, const ReportStrategy& report,
                     FlagStrategy flag, std::ostream& log) {
  const std::string hash = config_hash(canonical_json(cfg));
  const DeviationReport d =
      deviation_gain(cfg.episode(), agent, report, flag, cfg.n, cfg.base_seed);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  std::ostringstream csv;
  write_deviation_csv(csv, d, hash, cfg.base_seed);
  detail::spit(out / "deviation.csv", csv.str());

  ordered_json j;
  j["config_hash"] = hash;
  j["base_seed"] = cfg.base_seed;
  j["agent"] = agent;
  j["deviant_report"] = to_json(report);
  j["deviant_flag"] = flag_name(flag);
  j["baseline_mean"] = d.baseline_mean;
  j["deviant_mean"] = d.deviant_mean;
  j["paired_diff"] = {{"mean", d.paired_diff_mean}, {"stderr", d.paired_diff_stderr}, {"n", d.n}};
  detail::spit(out / "deviation.json", j.dump(2) + "\n");

  log << "deviation of agent " << agent << " to " << report_name(report) << "/" << flag_name(flag)
      << ": paired diff " << d.paired_diff_mean << " +- " << d.paired_diff_stderr << " (n=" << d.n
      << ")\n";
  return 0;
}

inline int fairshare(const ScenarioSpec& scenario, AgentSet alive, long mc_samples,
                     std::uint64_t seed, std::ostream& log) {
  auto print = [&](const char* label, const FairShares& fs) {
    log << label << "\n";
    fs.alive.for_each([&](AgentId i) {
      log << "  agent " << i << "  q " << fmt_double(fs.q_of(i)) << "  mu "
          << fmt_double(fs.mu_of(i));
      if (fs.method == FairShares::Method::kMonteCarlo) {
        log << "  (stderr q " << fmt_double(fs.q_stderr[i - 1]) << ")";
      }
      log << "\n";
    });
  };
  if (scenario.finite_support()) print("exact", exact_fair_shares(scenario, alive));
  if (mc_samples > 0 || !scenario.finite_support()) {
    Stream rng(seed);
    print("monte_carlo", mc_fair_shares(scenario, alive, mc_samples > 0 ? mc_samples : 100000, rng));
  }
  return 0;
}

inline int couple(const ExperimentConfig& cfg, std::ostream& log) {
  const std::string hash = config_hash(canonical_json(cfg));
  auto results = map_replications(cfg.n, cfg.base_seed, [&](int, std::uint64_t seed) {
    return coupling_check(cfg.scenario, cfg.reports, seed);
  });
  int divergent = 0;
  ordered_json failures = ordered_json::array();
  for (int r = 0; r < cfg.n; ++r) {
    if (!results[r].coupled) {
      ++divergent;
      failures.push_back({{"seed", replication_seed(cfg.base_seed, r)},
                          {"first_divergence", *results[r].first_divergence}});
    }
  }
  const fs::path out(cfg.out);
  fs::create_directories(out);
  ordered_json j;
  j["config_hash"] = hash;
  j["base_seed"] = cfg.base_seed;
  j["n"] = cfg.n;
  j["divergent"] = divergent;
  j["failures"] = failures;
  detail::spit(out / "couple.json", j.dump(2) + "\n");
  log << "coupling: " << (cfg.n - divergent) << "/" << cfg.n << " seeds identical\n";
  return divergent == 0 ? 0 : 1;
}

inline int scenarios(std::ostream& log) {
  for (const auto& e : scenario_library()) {
    log << e.name << "  (default K=" << e.default_K << (e.fixed_K ? ", fixed" : "") << ")\n    "
        << e.provenance << "\n";
  }
  return 0;
}

}  // namespace adaudit::commands
