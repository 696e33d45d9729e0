#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "adaudit/engine.hpp"

namespace adaudit {

struct MetricsRow {
  std::uint64_t seed = 0;
  double regret = 0.0;
  long audits = 0;
  std::vector<double> per_agent_utility;
  std::vector<long> d_counts;
  int eliminations = 0;
  int epochs = 1;
  double hindsight_welfare = 0.0;  // sum over rounds of max_i u_{t,i}
  // Secondary metric: benchmark restricted to agents alive at round start.
  double regret_among_alive = 0.0;
};

// Missed fair win: alive, lost, utility >= c, and the true utility would have
// beaten every other alive agent's report under the lexicographic order.
inline bool missed_fair_win(const RoundRecord& r, AgentId i, double c) {
  if (!r.alive_before.contains(i) || r.outcome.winner == i) return false;
  const double u = r.utilities[i - 1];
  if (u < c) return false;
  bool beats_all = true;
  r.alive_before.for_each([&](AgentId j) {
    if (j == i) return;
    const double v = r.reports[j - 1];
    if (!(u > v || (u == v && i > j))) beats_all = false;
  });
  return beats_all;
}

// Streams rounds into a MetricsRow.
class MetricsAccumulator {
 public:
  MetricsAccumulator(int k, double c, std::uint64_t seed) : c_(c) {
    row_.seed = seed;
    row_.per_agent_utility.assign(k, 0.0);
    row_.d_counts.assign(k, 0);
  }

  void operator()(const RoundRecord& r) {
    const auto& u = r.utilities;
    const double best = *std::max_element(u.begin(), u.end());
    double best_alive = 0.0;
    r.alive_before.for_each([&](AgentId i) { best_alive = std::max(best_alive, u[i - 1]); });
    const AgentId w = r.outcome.winner;
    const double gained = w == kNobody ? 0.0 : u[w - 1];
    row_.hindsight_welfare += best;
    row_.regret += best - gained;
    row_.regret_among_alive += best_alive - gained;
    if (w != kNobody) row_.per_agent_utility[w - 1] += gained;
    if (r.outcome.audited) ++row_.audits;
    if (r.outcome.eliminated != kNobody) ++row_.eliminations;
    for (AgentId i = 1; i <= static_cast<AgentId>(u.size()); ++i) {
      if (missed_fair_win(r, i, c_)) ++row_.d_counts[i - 1];
    }
  }

  MetricsRow finish(const EpisodeSummary& s) {
    row_.epochs = static_cast<int>(s.epoch_boundaries.size());
    return row_;
  }

 private:
  double c_;
  MetricsRow row_;
};

inline MetricsRow metrics_of(const Trace& trace, const ScenarioSpec& scenario) {
  MetricsAccumulator acc(scenario.K(), scenario.c(), trace.seed);
  for (const RoundRecord& r : trace.rounds) acc(r);
  return acc.finish(EpisodeSummary{trace.final_alive, trace.epoch_boundaries});
}

inline MetricsRow run_episode_metrics(const EpisodeConfig& config) {
  MetricsAccumulator acc(config.scenario.K(), config.scenario.c(), config.seed);
  EpisodeSummary s = run_episode(config, [&](const RoundRecord& r) { acc(r); });
  return acc.finish(s);
}

inline std::vector<MetricsRow> metrics_replications(const EpisodeConfig& config, int n,
                                                    std::uint64_t base_seed) {
  return map_replications(n, base_seed, [&](int, std::uint64_t seed) {
    EpisodeConfig c = config;
    c.seed = seed;
    return run_episode_metrics(c);
  });
}

inline double regret_of(const Trace& trace) {
  double regret = 0.0;
  for (const RoundRecord& r : trace.rounds) {
    const double best = *std::max_element(r.utilities.begin(), r.utilities.end());
    const AgentId w = r.outcome.winner;
    regret += best - (w == kNobody ? 0.0 : r.utilities[w - 1]);
  }
  return regret;
}

inline std::vector<long> d_counts_of(const Trace& trace, const ScenarioSpec& scenario) {
  std::vector<long> counts(scenario.K(), 0);
  for (const RoundRecord& r : trace.rounds) {
    for (AgentId i = 1; i <= scenario.K(); ++i) {
      if (missed_fair_win(r, i, scenario.c())) ++counts[i - 1];
    }
  }
  return counts;
}

// Installed estimates outside [q/4, 4q], with q the exact fair winning
// probability of the alive set at installation time.
inline int estimate_window_violations(const Trace& trace, const ScenarioSpec& scenario) {
  FairShareCache shares(scenario);
  int violations = 0;
  for (const RoundRecord& r : trace.rounds) {
    if (!r.outcome.installed) continue;
    const double q = shares.get(r.alive_before).q_of(r.outcome.proposal->agent);
    const double q_hat = r.outcome.proposal->q_hat;
    if (q_hat < q / 4.0 || q_hat > 4.0 * q) ++violations;
  }
  return violations;
}

struct SampleSummary {
  double mean = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};

inline SampleSummary summarize(const std::vector<double>& xs) {
  SampleSummary s;
  s.n = static_cast<int>(xs.size());
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / s.n;
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stderr_ = std::sqrt(ss / (s.n - 1) / s.n);
  }
  return s;
}

struct AuditGrowth {
  std::vector<int> horizons;
  std::vector<double> mean_audits;
  std::vector<double> stderr_audits;
  double slope = 0.0;      // least squares of mean audits on ln T
  double intercept = 0.0;
  std::vector<double> residuals;
};

// Least-squares fit of mean audit counts against ln T over a geometric grid.
inline AuditGrowth audits_vs_logT(const EpisodeConfig& base, const std::vector<int>& grid,
                                  int n, std::uint64_t base_seed) {
  if (grid.size() < 3) throw DegenerateGrid("need at least 3 horizons");
  for (std::size_t g = 1; g < grid.size(); ++g) {
    if (grid[g] <= grid[g - 1]) throw DegenerateGrid("horizons must be strictly increasing");
  }
  const double ratio = static_cast<double>(grid[1]) / grid[0];
  for (std::size_t g = 2; g < grid.size(); ++g) {
    const double r = static_cast<double>(grid[g]) / grid[g - 1];
    if (std::abs(r / ratio - 1.0) > 0.01) throw DegenerateGrid("horizons must be geometrically spaced");
  }

  AuditGrowth out;
  out.horizons = grid;
  for (int T : grid) {
    EpisodeConfig c = base;
    c.scenario = base.scenario.with_horizon(T);
    auto rows = metrics_replications(c, n, base_seed);
    std::vector<double> audits;
    for (const auto& r : rows) audits.push_back(static_cast<double>(r.audits));
    const SampleSummary s = summarize(audits);
    out.mean_audits.push_back(s.mean);
    out.stderr_audits.push_back(s.stderr_);
  }

  const double m = static_cast<double>(grid.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = std::log(static_cast<double>(grid[g]));
    const double y = out.mean_audits[g];
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  out.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  out.intercept = (sy - out.slope * sx) / m;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double x = std::log(static_cast<double>(grid[g]));
    out.residuals.push_back(out.mean_audits[g] - (out.intercept + out.slope * x));
  }
  return out;
}

struct DeviationReport {
  AgentId agent = kNobody;
  double baseline_mean = 0.0;
  double deviant_mean = 0.0;
  double paired_diff_mean = 0.0;
  double paired_diff_stderr = 0.0;
  int n = 0;
};

// Paired comparison of one agent's realized utility when it alone switches
// strategy. Both arms of a pair share the replication seed, hence all
// utility draws.
inline DeviationReport deviation_gain(const EpisodeConfig& base, AgentId agent,
                                      const ReportStrategy& deviant_report,
                                      FlagStrategy deviant_flag, int n,
                                      std::uint64_t base_seed) {
  if (n < 2) throw ValidationError("deviation_gain needs n >= 2");
  if (agent < 1 || agent > base.scenario.K()) throw ValidationError("agent out of range");
  EpisodeConfig deviant = base;
  deviant.reports[agent - 1] = deviant_report;
  deviant.flags[agent - 1] = deviant_flag;

  struct Pair {
    double baseline, deviant;
  };
  auto pairs = map_replications(n, base_seed, [&](int, std::uint64_t seed) {
    EpisodeConfig b = base, d = deviant;
    b.seed = d.seed = seed;
    return Pair{run_episode_metrics(b).per_agent_utility[agent - 1],
                run_episode_metrics(d).per_agent_utility[agent - 1]};
  });

  std::vector<double> base_u, dev_u, diff;
  for (const Pair& p : pairs) {
    base_u.push_back(p.baseline);
    dev_u.push_back(p.deviant);
    diff.push_back(p.deviant - p.baseline);
  }
  const SampleSummary d = summarize(diff);
  return DeviationReport{agent, summarize(base_u).mean, summarize(dev_u).mean, d.mean,
                         d.stderr_, n};
}

struct CouplingResult {
  bool coupled = true;
  std::optional<int> first_divergence;  // round number
};

// Runs AdaAudit with well-behaved flags and the auxiliary game on the same
// seed and compares winners and alive sets round by round. An illegal
// mark-up surfaces as RestrictedMarkUp.
inline CouplingResult coupling_check(const ScenarioSpec& scenario,
                                     const std::vector<ReportStrategy>& profile,
                                     std::uint64_t seed) {
  struct Step {
    AgentId winner;
    AgentSet alive_after;
    bool operator==(const Step&) const = default;
  };
  auto record = [&](const MechanismKind& kind) {
    EpisodeConfig c{scenario, kind, profile,
                    std::vector<FlagStrategy>(scenario.K(), FlagStrategy::kWellBehaved), seed};
    std::vector<Step> steps;
    steps.reserve(static_cast<std::size_t>(scenario.T()));
    run_episode(c, [&](const RoundRecord& r) {
      AgentSet after = r.alive_before;
      if (r.outcome.eliminated != kNobody) after.erase(r.outcome.eliminated);
      steps.push_back({r.outcome.winner, after});
    });
    return steps;
  };
  const auto aux = record(Auxiliary{});
  const auto actual = record(AdaAudit{});
  CouplingResult res;
  for (std::size_t t = 0; t < actual.size(); ++t) {
    if (actual[t] != aux[t]) {
      res.coupled = false;
      res.first_divergence = static_cast<int>(t) + 1;
      break;
    }
  }
  return res;
}

}  // namespace adaudit
