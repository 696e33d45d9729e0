#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaudit/analysis.hpp"
#include "adaudit/config.hpp"
#include "adaudit/engine.hpp"

namespace adaudit {

// Shortest round-trippable text for a double.
inline std::string fmt_double(double x) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

inline json agent_list(AgentSet s) { return s.members(); }

// metrics.csv: a comment line carrying the config hash and base seed, then
// seed,regret,audits,utility_1..K,dcount_1..K,eliminations,epochs
inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows, int k,
                              const std::string& hash, std::uint64_t base_seed) {
  os << "# config_hash=" << hash << " base_seed=" << base_seed << "\n";
  os << "seed,regret,audits";
  for (int i = 1; i <= k; ++i) os << ",utility_" << i;
  for (int i = 1; i <= k; ++i) os << ",dcount_" << i;
  os << ",eliminations,epochs\n";
  for (const MetricsRow& r : rows) {
    os << r.seed << ',' << fmt_double(r.regret) << ',' << r.audits;
    for (double u : r.per_agent_utility) os << ',' << fmt_double(u);
    for (long d : r.d_counts) os << ',' << d;
    os << ',' << r.eliminations << ',' << r.epochs << "\n";
  }
}

inline json summary_entry(const std::vector<double>& xs) {
  const SampleSummary s = summarize(xs);
  return {{"mean", s.mean}, {"stderr", s.stderr_}, {"n", s.n}};
}

inline ordered_json metrics_summary(const std::vector<MetricsRow>& rows, int k) {
  std::vector<double> regret, regret_alive, audits, elim, epochs;
  std::vector<std::vector<double>> util(k), dcount(k);
  for (const MetricsRow& r : rows) {
    regret.push_back(r.regret);
    regret_alive.push_back(r.regret_among_alive);
    audits.push_back(static_cast<double>(r.audits));
    elim.push_back(r.eliminations);
    epochs.push_back(r.epochs);
    for (int i = 0; i < k; ++i) {
      util[i].push_back(r.per_agent_utility[i]);
      dcount[i].push_back(static_cast<double>(r.d_counts[i]));
    }
  }
  ordered_json s;
  s["regret"] = summary_entry(regret);
  s["regret_among_alive"] = summary_entry(regret_alive);
  s["audits"] = summary_entry(audits);
  s["eliminations"] = summary_entry(elim);
  s["epochs"] = summary_entry(epochs);
  for (int i = 0; i < k; ++i) s["utility_" + std::to_string(i + 1)] = summary_entry(util[i]);
  for (int i = 0; i < k; ++i) s["dcount_" + std::to_string(i + 1)] = summary_entry(dcount[i]);
  return s;
}

inline void write_deviation_csv(std::ostream& os, const DeviationReport& d,
                                const std::string& hash, std::uint64_t base_seed) {
  os << "# config_hash=" << hash << " base_seed=" << base_seed << "\n";
  os << "agent,baseline_mean,deviant_mean,paired_diff_mean,paired_diff_stderr,n\n";
  os << d.agent << ',' << fmt_double(d.baseline_mean) << ',' << fmt_double(d.deviant_mean)
     << ',' << fmt_double(d.paired_diff_mean) << ',' << fmt_double(d.paired_diff_stderr)
     << ',' << d.n << "\n";
}

// ---------------------------------------------------------------------------
// Trace records, one JSON object per line:
//   header: record, config_hash, seed, K, T, mechanism
//   round:  t, alive, u, v, winner, audit_p, audited, observed, eliminated,
//           proposal, installed, flags
//   footer: record, final_alive, epoch_boundaries
// Absent reports are null; `proposal` is null or {agent, q_hat}.

inline ordered_json round_to_json(const RoundRecord& r) {
  ordered_json j;
  const RoundOutcome& o = r.outcome;
  j["t"] = o.t;
  j["alive"] = r.alive_before.members();
  j["u"] = r.utilities;
  ordered_json v = ordered_json::array();
  for (double x : r.reports) {
    if (std::isnan(x)) v.push_back(nullptr);
    else v.push_back(x);
  }
  j["v"] = v;
  j["winner"] = o.winner;
  j["audit_p"] = o.audit_probability;
  j["audited"] = o.audited;
  j["observed"] = o.observed_utility;
  j["eliminated"] = o.eliminated;
  if (o.proposal) j["proposal"] = {{"agent", o.proposal->agent}, {"q_hat", o.proposal->q_hat}};
  else j["proposal"] = nullptr;
  j["installed"] = o.installed;
  j["flags"] = o.flags;
  return j;
}

inline RoundRecord round_from_json(const json& j) {
  RoundRecord r;
  RoundOutcome& o = r.outcome;
  o.t = j.at("t").get<int>();
  for (int a : j.at("alive")) r.alive_before.insert(a);
  r.utilities = j.at("u").get<std::vector<double>>();
  for (const auto& x : j.at("v")) r.reports.push_back(x.is_null() ? kNoReport : x.get<double>());
  o.winner = j.at("winner").get<int>();
  o.audit_probability = j.at("audit_p").get<double>();
  o.audited = j.at("audited").get<bool>();
  o.observed_utility = j.at("observed").get<double>();
  o.eliminated = j.at("eliminated").get<int>();
  if (!j.at("proposal").is_null()) {
    o.proposal = Proposal{j.at("proposal").at("agent").get<int>(),
                          j.at("proposal").at("q_hat").get<double>()};
  }
  o.installed = j.at("installed").get<bool>();
  o.flags = j.at("flags").get<std::vector<int>>();
  return r;
}

inline void write_trace_ndjson(std::ostream& os, const Trace& trace, const EpisodeConfig& cfg) {
  ordered_json header;
  header["record"] = "header";
  header["config_hash"] = config_hash(canonical_json(cfg));
  header["seed"] = trace.seed;
  header["K"] = cfg.scenario.K();
  header["T"] = cfg.scenario.T();
  header["mechanism"] = mechanism_name(cfg.mechanism);
  os << header.dump() << "\n";
  for (const RoundRecord& r : trace.rounds) os << round_to_json(r).dump() << "\n";
  ordered_json footer;
  footer["record"] = "footer";
  footer["final_alive"] = trace.final_alive.members();
  footer["epoch_boundaries"] = trace.epoch_boundaries;
  os << footer.dump() << "\n";
}

struct ParsedTrace {
  std::string config_hash;
  Trace trace;
};

inline ParsedTrace read_trace_ndjson(std::istream& is) {
  ParsedTrace out;
  std::string line;
  bool header = false, footer = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("trace line: ") + e.what());
    }
    if (j.contains("record")) {
      const std::string kind = j.at("record").get<std::string>();
      if (kind == "header") {
        out.config_hash = j.at("config_hash").get<std::string>();
        out.trace.seed = j.at("seed").get<std::uint64_t>();
        header = true;
      } else if (kind == "footer") {
        for (int a : j.at("final_alive")) out.trace.final_alive.insert(a);
        out.trace.epoch_boundaries = j.at("epoch_boundaries").get<std::vector<int>>();
        footer = true;
      }
      continue;
    }
    out.trace.rounds.push_back(round_from_json(j));
  }
  if (!header || !footer) throw ParseError("trace is missing its header or footer");
  return out;
}

}  // namespace adaudit
