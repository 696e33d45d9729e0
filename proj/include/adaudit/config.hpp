#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaudit/agents.hpp"
#include "adaudit/distributions.hpp"
#include "adaudit/engine.hpp"
#include "adaudit/errors.hpp"
#include "adaudit/mechanism.hpp"

namespace adaudit {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Scenario library

struct ScenarioLibraryEntry {
  std::string name;
  std::string provenance;
  int default_K;
  bool fixed_K;  // K cannot be changed
  std::function<ScenarioSpec(int K, int T)> build;
};

inline constexpr int kDefaultHorizon = 1000;

inline const std::vector<ScenarioLibraryEntry>& scenario_library() {
  static const std::vector<ScenarioLibraryEntry> lib = {
      {"lb-regret-K",
       "regret lower-bound construction: u1 = 2/3 a.s.; u_i (i>=2) is 1 w.p. "
       "(1/8)/T else 1/3; c = 1/3. The Bernoulli rate is set from T at build time.",
       3, false,
       [](int K, int T) {
         std::vector<UtilitySpec> d{UtilitySpec::point(2.0 / 3.0)};
         for (int i = 2; i <= K; ++i) {
           d.push_back(UtilitySpec::scaled_bernoulli(1.0 / 3.0, 1.0, 0.125 / T));
         }
         return ScenarioSpec(T, 1.0 / 3.0, std::move(d));
       }},
      {"lb-audit-2",
       "audit/regret trade-off construction: u1 = 2/3 a.s.; u2 is 1 w.p. 1/3 else 1/3; "
       "u_i = 1/4 a.s. for i >= 3; c = 1/3.",
       2, false,
       [](int K, int T) {
         std::vector<UtilitySpec> d{UtilitySpec::point(2.0 / 3.0),
                                    UtilitySpec::scaled_bernoulli(1.0 / 3.0, 1.0, 1.0 / 3.0)};
         for (int i = 3; i <= K; ++i) d.push_back(UtilitySpec::point(0.25));
         return ScenarioSpec(T, 1.0 / 3.0, std::move(d));
       }},
      {"sec2-example",
       "two agents with fixed utilities 1/3 and 2/3; c = 1/3. The low agent never "
       "wins honestly and has nothing to lose by lying.",
       2, true,
       [](int, int T) {
         return ScenarioSpec(T, 1.0 / 3.0,
                             {UtilitySpec::point(1.0 / 3.0), UtilitySpec::point(2.0 / 3.0)});
       }},
      {"mixed-3",
       "three discrete agents with c = 0.2; agent 2 is supported on [c,1], agents 1 "
       "and 3 put mass below c.",
       3, true,
       [](int, int T) {
         return ScenarioSpec(
             T, 0.2,
             {UtilitySpec::discrete({{0.1, 0.3}, {0.5, 0.4}, {0.9, 0.3}}),
              UtilitySpec::discrete({{0.3, 0.5}, {0.7, 0.5}}),
              UtilitySpec::scaled_bernoulli(0.05, 0.8, 0.4)});
       }},
      {"uniform-stress",
       "continuous stress case: agent 1 uniform on [0.3,1], agent 2 uniform on [0,1]; "
       "c = 0.3. Fair shares are Monte Carlo only.",
       2, true,
       [](int, int T) {
         return ScenarioSpec(T, 0.3, {UtilitySpec::uniform(0.3, 1.0), UtilitySpec::uniform(0.0, 1.0)});
       }},
  };
  return lib;
}

inline const ScenarioLibraryEntry* find_scenario(const std::string& name) {
  for (const auto& e : scenario_library())
    if (e.name == name) return &e;
  return nullptr;
}

inline ScenarioSpec library_scenario(const std::string& name, std::optional<int> K,
                                     std::optional<int> T) {
  const ScenarioLibraryEntry* e = find_scenario(name);
  if (!e) throw ValidationError("scenario: unknown library scenario '" + name + "'");
  if (K && e->fixed_K && *K != e->default_K) {
    throw ValidationError("scenario.K: '" + name + "' has fixed K = " +
                          std::to_string(e->default_K));
  }
  return e->build(K.value_or(e->default_K), T.value_or(kDefaultHorizon));
}

// ---------------------------------------------------------------------------
// JSON conversions

namespace detail {

[[noreturn]] inline void fail_field(const std::string& field, const std::string& msg) {
  throw ValidationError(field + ": " + msg);
}

// Runs fn and prefixes any validation message with the field path.
template <typename Fn>
auto with_field(const std::string& field, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(field + ": " + e.what());
  } catch (const json::exception& e) {
    throw ValidationError(field + ": " + e.what());
  }
}

inline double number(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number()) {
    throw ValidationError(std::string("missing numeric field '") + key + "'");
  }
  return j.at(key).get<double>();
}

}  // namespace detail

inline json to_json(const UtilitySpec& spec) {
  return std::visit(
      [](const auto& d) -> json {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, UtilitySpec::PointMass>) {
          return {{"kind", "point"}, {"value", d.value}};
        } else if constexpr (std::is_same_v<D, UtilitySpec::DiscreteTable>) {
          json atoms = json::array();
          for (const Atom& a : d.atoms) atoms.push_back({a.value, a.prob});
          return {{"kind", "discrete"}, {"atoms", atoms}};
        } else if constexpr (std::is_same_v<D, UtilitySpec::Uniform>) {
          return {{"kind", "uniform"}, {"lo", d.lo}, {"hi", d.hi}};
        } else {
          return {{"kind", "bernoulli"}, {"lo", d.lo}, {"hi", d.hi}, {"p", d.p}};
        }
      },
      spec.variant());
}

inline UtilitySpec utility_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ValidationError("expected object with 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "point") return UtilitySpec::point(detail::number(j, "value"));
  if (kind == "uniform") return UtilitySpec::uniform(detail::number(j, "lo"), detail::number(j, "hi"));
  if (kind == "bernoulli") {
    return UtilitySpec::scaled_bernoulli(detail::number(j, "lo"), detail::number(j, "hi"),
                                         detail::number(j, "p"));
  }
  if (kind == "discrete") {
    std::vector<Atom> atoms;
    for (const auto& a : j.at("atoms")) {
      if (!a.is_array() || a.size() != 2) throw ValidationError("atoms are [value, prob] pairs");
      atoms.push_back({a[0].get<double>(), a[1].get<double>()});
    }
    return UtilitySpec::discrete(std::move(atoms));
  }
  throw ValidationError("unknown distribution kind '" + kind + "'");
}

inline json to_json(const ScenarioSpec& s) {
  json dists = json::array();
  for (const auto& d : s.dists()) dists.push_back(to_json(d));
  return {{"K", s.K()}, {"T", s.T()}, {"c", s.c()}, {"dists", dists}};
}

// Accepts a library name, {"name", "K"?, "T"?}, or an inline {"T", "c", "dists"}.
inline ScenarioSpec scenario_from_json(const json& j) {
  if (j.is_string()) return library_scenario(j.get<std::string>(), std::nullopt, std::nullopt);
  if (!j.is_object()) throw ValidationError("scenario: expected a name or an object");
  std::optional<int> T;
  if (j.contains("T")) T = detail::with_field("scenario.T", [&] { return j.at("T").get<int>(); });
  if (j.contains("name")) {
    std::optional<int> K;
    if (j.contains("K")) K = detail::with_field("scenario.K", [&] { return j.at("K").get<int>(); });
    return library_scenario(j.at("name").get<std::string>(), K, T);
  }
  const double c = detail::with_field("scenario.c", [&] { return detail::number(j, "c"); });
  if (!j.contains("dists") || !j.at("dists").is_array()) {
    detail::fail_field("scenario.dists", "expected an array of distributions");
  }
  std::vector<UtilitySpec> dists;
  for (std::size_t i = 0; i < j.at("dists").size(); ++i) {
    dists.push_back(detail::with_field("scenario.dists[" + std::to_string(i) + "]",
                                       [&] { return utility_from_json(j.at("dists")[i]); }));
  }
  if (j.contains("K") && j.at("K").get<std::size_t>() != dists.size()) {
    detail::fail_field("scenario.K", "does not match the number of distributions");
  }
  return detail::with_field("scenario", [&] {
    return ScenarioSpec(T.value_or(kDefaultHorizon), c, std::move(dists));
  });
}

inline json to_json(const MechanismKind& m) {
  json j = {{"kind", mechanism_name(m)}};
  if (const auto* f = std::get_if<FixedProb>(&m)) j["p"] = f->p;
  return j;
}

inline MechanismKind mechanism_from_json(const json& j) {
  const std::string kind = j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>();
  MechanismKind m;
  if (kind == "adaaudit") m = AdaAudit{};
  else if (kind == "ideal") m = IdealOracle{};
  else if (kind == "auxiliary") m = Auxiliary{};
  else if (kind == "fixed") {
    if (!j.is_object()) throw ValidationError("fixed mechanism needs 'p'");
    m = FixedProb{detail::with_field("p", [&] { return detail::number(j, "p"); })};
  } else {
    throw ValidationError("unknown mechanism kind '" + kind + "'");
  }
  detail::with_field("p", [&] { validate(m); return 0; });
  return m;
}

inline json to_json(const ReportStrategy& s) {
  return std::visit(
      [](const auto& v) -> json {
        using S = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<S, Truthful>) return {{"kind", "truthful"}};
        else if constexpr (std::is_same_v<S, MarkUpAlways>) return {{"kind", "markup"}, {"value", v.value}};
        else if constexpr (std::is_same_v<S, MarkUpWhenUnwatched>) return {{"kind", "markup_unwatched"}};
        else if constexpr (std::is_same_v<S, MarkDown>) return {{"kind", "markdown"}, {"theta", v.theta}};
        else {
          json rounds = json::object();
          for (auto [t, r] : v.by_round) rounds[std::to_string(t)] = r;
          return {{"kind", "scripted"}, {"rounds", rounds}};
        }
      },
      s);
}

inline ReportStrategy report_from_json(const json& j) {
  const std::string kind = j.is_string() ? j.get<std::string>() : j.at("kind").get<std::string>();
  ReportStrategy s;
  if (kind == "truthful") s = Truthful{};
  else if (kind == "markup_unwatched") s = MarkUpWhenUnwatched{};
  else if (kind == "markup") s = MarkUpAlways{j.is_object() && j.contains("value") ? detail::number(j, "value") : 1.0};
  else if (kind == "markdown") s = MarkDown{detail::number(j, "theta")};
  else if (kind == "scripted") {
    Scripted sc;
    for (const auto& [t, v] : j.at("rounds").items()) sc.by_round[std::stoi(t)] = v.get<double>();
    s = std::move(sc);
  } else {
    throw ValidationError("unknown report strategy '" + kind + "'");
  }
  validate(s);
  return s;
}

inline FlagStrategy flag_from_json(const json& j) {
  const std::string name = j.get<std::string>();
  for (FlagStrategy f : {FlagStrategy::kWellBehaved, FlagStrategy::kNever, FlagStrategy::kAlways,
                         FlagStrategy::kSelfishUpOnly}) {
    if (flag_name(f) == name) return f;
  }
  throw ValidationError("unknown flag strategy '" + name + "'");
}

// ---------------------------------------------------------------------------
// Experiment configuration

struct ExperimentConfig {
  std::string scenario_label;  // library name or "inline"
  ScenarioSpec scenario;
  MechanismKind mechanism = AdaAudit{};
  std::vector<ReportStrategy> reports;
  std::vector<FlagStrategy> flags;
  int n = 1;
  std::uint64_t base_seed = 0;
  std::vector<int> t_grid;
  std::string out = "out";

  EpisodeConfig episode(std::uint64_t seed = 0) const {
    return EpisodeConfig{scenario, mechanism, reports, flags, seed};
  }
};

inline ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.what());
  }
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  if (!j.contains("scenario")) detail::fail_field("scenario", "required");

  const json& sref = j.at("scenario");
  std::string label = "inline";
  if (sref.is_string()) label = sref.get<std::string>();
  else if (sref.is_object() && sref.contains("name")) label = sref.at("name").get<std::string>();
  ScenarioSpec scenario = scenario_from_json(sref);
  const auto k = static_cast<std::size_t>(scenario.K());

  ExperimentConfig cfg{label, scenario};
  if (j.contains("mechanism")) {
    cfg.mechanism = detail::with_field("mechanism", [&] { return mechanism_from_json(j.at("mechanism")); });
  }
  cfg.reports.assign(k, Truthful{});
  cfg.flags.assign(k, FlagStrategy::kWellBehaved);
  if (j.contains("strategies")) {
    const json& strategies = j.at("strategies");
    if (!strategies.is_array()) detail::fail_field("strategies", "expected an array");
    for (std::size_t s = 0; s < strategies.size(); ++s) {
      const std::string field = "strategies[" + std::to_string(s) + "]";
      const json& e = strategies[s];
      const int agent = detail::with_field(field + ".agent", [&] { return e.at("agent").get<int>(); });
      if (agent < 1 || static_cast<std::size_t>(agent) > k) {
        detail::fail_field(field + ".agent", "agent " + std::to_string(agent) +
                                                 " outside 1.." + std::to_string(k));
      }
      if (e.contains("report")) {
        cfg.reports[agent - 1] = detail::with_field(field + ".report", [&] { return report_from_json(e.at("report")); });
      }
      if (e.contains("flag")) {
        cfg.flags[agent - 1] = detail::with_field(field + ".flag", [&] { return flag_from_json(e.at("flag")); });
      }
    }
  }
  if (j.contains("n")) {
    cfg.n = detail::with_field("n", [&] { return j.at("n").get<int>(); });
    if (cfg.n < 1) detail::fail_field("n", "must be >= 1");
  }
  if (j.contains("base_seed")) {
    cfg.base_seed = detail::with_field("base_seed", [&] { return j.at("base_seed").get<std::uint64_t>(); });
  }
  if (j.contains("t_grid")) {
    cfg.t_grid = detail::with_field("t_grid", [&] { return j.at("t_grid").get<std::vector<int>>(); });
    for (int T : cfg.t_grid)
      if (T < 1) detail::fail_field("t_grid", "horizons must be >= 1");
  }
  if (j.contains("out")) cfg.out = detail::with_field("out", [&] { return j.at("out").get<std::string>(); });
  return cfg;
}

// Fully resolved configuration; output locations are excluded so that the
// same experiment hashes identically wherever it is written.
inline json canonical_json(const ExperimentConfig& cfg) {
  json strategies = json::array();
  for (std::size_t i = 0; i < cfg.reports.size(); ++i) {
    strategies.push_back({{"agent", i + 1},
                          {"report", to_json(cfg.reports[i])},
                          {"flag", flag_name(cfg.flags[i])}});
  }
  return {{"scenario", to_json(cfg.scenario)},
          {"scenario_label", cfg.scenario_label},
          {"mechanism", to_json(cfg.mechanism)},
          {"strategies", strategies},
          {"n", cfg.n},
          {"base_seed", cfg.base_seed},
          {"t_grid", cfg.t_grid}};
}

inline json canonical_json(const EpisodeConfig& cfg) {
  json strategies = json::array();
  for (std::size_t i = 0; i < cfg.reports.size(); ++i) {
    strategies.push_back({{"agent", i + 1},
                          {"report", to_json(cfg.reports[i])},
                          {"flag", flag_name(cfg.flags[i])}});
  }
  return {{"scenario", to_json(cfg.scenario)},
          {"mechanism", to_json(cfg.mechanism)},
          {"strategies", strategies},
          {"seed", cfg.seed}};
}

// 64-bit FNV-1a of the compact canonical dump, as 16 hex digits.
inline std::string config_hash(const json& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace adaudit
