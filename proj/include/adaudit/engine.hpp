#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

#include "adaudit/agents.hpp"
#include "adaudit/distributions.hpp"
#include "adaudit/mechanism.hpp"
#include "adaudit/rng.hpp"

namespace adaudit {

struct EpisodeConfig {
  ScenarioSpec scenario;
  MechanismKind mechanism = AdaAudit{};
  std::vector<ReportStrategy> reports;  // one per agent
  std::vector<FlagStrategy> flags;      // one per agent
  std::uint64_t seed = 0;

  // All agents truthful with well-behaved flags.
  static EpisodeConfig honest(ScenarioSpec scenario, MechanismKind mechanism,
                              std::uint64_t seed = 0) {
    const auto k = static_cast<std::size_t>(scenario.K());
    return EpisodeConfig{std::move(scenario), mechanism,
                         std::vector<ReportStrategy>(k, Truthful{}),
                         std::vector<FlagStrategy>(k, FlagStrategy::kWellBehaved), seed};
  }

  void validate() const {
    const auto k = static_cast<std::size_t>(scenario.K());
    if (reports.size() != k || flags.size() != k) {
      throw ValidationError("strategy vectors must have one entry per agent");
    }
    adaudit::validate(mechanism);
    for (const auto& r : reports) adaudit::validate(r);
  }
};

struct RoundRecord {
  RoundOutcome outcome;
  std::vector<double> utilities;  // all K agents, eliminated ones included
  Reports reports;                // kNoReport for eliminated agents
  AgentSet alive_before;
};

struct Trace {
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds;
  AgentSet final_alive;
  std::vector<int> epoch_boundaries{1};
};

// Stream layout of one episode. Every consumer owns a stream derived from the
// episode seed, so changing one agent's strategy never shifts anyone else's
// draws.
struct EpisodeStreams {
  static constexpr std::uint64_t kUtilityBase = 0x100;
  static constexpr std::uint64_t kStrategyBase = 0x200;
  static constexpr std::uint64_t kMechanism = 0x300;
  static constexpr std::uint64_t kFairShares = 0x301;

  std::vector<Stream> utility;
  std::vector<Stream> strategy;
  Stream mechanism;

  EpisodeStreams(std::uint64_t seed, int k) : mechanism(derive_seed(seed, kMechanism)) {
    for (int i = 1; i <= k; ++i) {
      utility.emplace_back(derive_seed(seed, kUtilityBase + i));
      strategy.emplace_back(derive_seed(seed, kStrategyBase + i));
    }
  }
};

struct EpisodeSummary {
  AgentSet final_alive;
  std::vector<int> epoch_boundaries{1};
};

namespace detail {

template <AuditCoin Coin, FlagPoll Poll>
RoundOutcome dispatch_step(const MechanismKind& kind, MechanismState& st,
                           std::span<const double> reports, std::span<const double> utils,
                           FairShareCache& shares, Poll&& poll, Coin&& coin) {
  return std::visit(
      [&](const auto& m) -> RoundOutcome {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, AdaAudit>) {
          return step_adaaudit(st, reports, utils, poll, coin);
        } else if constexpr (std::is_same_v<M, FixedProb>) {
          return step_fixedprob(st, reports, utils, coin, m.p);
        } else if constexpr (std::is_same_v<M, IdealOracle>) {
          return step_ideal(st, reports, utils, coin, shares.get(st.alive).mu);
        } else {
          return step_auxiliary(st, reports, utils, shares.get(st.alive).q);
        }
      },
      kind);
}

}  // namespace detail

// Runs one episode and hands each round to `sink(const RoundRecord&)`. The
// record is reused between rounds; copy what you keep.
template <typename Sink>
EpisodeSummary run_episode(const EpisodeConfig& config, Sink&& sink) {
  config.validate();
  const ScenarioSpec& sc = config.scenario;
  const int k = sc.K();
  EpisodeStreams streams(config.seed, k);
  FairShareCache shares(sc, derive_seed(config.seed, EpisodeStreams::kFairShares));
  MechanismState st = MechanismState::initial(sc);
  const bool epochs = std::holds_alternative<AdaAudit>(config.mechanism);

  EpisodeSummary summary;
  RoundRecord rec;
  rec.utilities.assign(k, 0.0);
  rec.reports.assign(k, kNoReport);

  auto view_for = [&](AgentId i) {
    AgentView v;
    v.t = st.t;
    v.T = sc.T();
    v.K = k;
    v.c = sc.c();
    v.alive = st.alive;
    v.self = i;
    v.utility = rec.utilities[i - 1];
    v.installed_estimates = st.q_hat;
    v.shares = &shares;
    return v;
  };
  auto poll = [&](AgentId winner, double q_hat, const MechanismState&) {
    std::vector<int> answers(k, 0);
    const Proposal proposal{winner, q_hat};
    for (AgentId i = 1; i <= k; ++i) {
      answers[i - 1] = flag(config.flags[i - 1], proposal, view_for(i));
    }
    return answers;
  };
  RandomCoin coin{&streams.mechanism};

  for (int t = 1; t <= sc.T(); ++t) {
    rec.alive_before = st.alive;
    for (AgentId i = 1; i <= k; ++i) {
      rec.utilities[i - 1] = sc.dist(i).sample(streams.utility[i - 1]);
    }
    for (AgentId i = 1; i <= k; ++i) {
      rec.reports[i - 1] = st.alive.contains(i)
                               ? report(config.reports[i - 1], view_for(i),
                                        streams.strategy[i - 1])
                               : kNoReport;
    }
    rec.outcome = detail::dispatch_step(config.mechanism, st, rec.reports, rec.utilities,
                                        shares, poll, coin);
    if (epochs && rec.outcome.eliminated != kNobody) {
      summary.epoch_boundaries.push_back(st.epoch_start);
    }
    sink(static_cast<const RoundRecord&>(rec));
  }
  summary.final_alive = st.alive;
  return summary;
}

inline Trace run_episode(const EpisodeConfig& config) {
  Trace trace;
  trace.seed = config.seed;
  trace.rounds.reserve(static_cast<std::size_t>(config.scenario.T()));
  EpisodeSummary s = run_episode(config, [&](const RoundRecord& r) { trace.rounds.push_back(r); });
  trace.final_alive = s.final_alive;
  trace.epoch_boundaries = std::move(s.epoch_boundaries);
  return trace;
}

inline std::uint64_t replication_seed(std::uint64_t base_seed, std::uint64_t r) {
  return derive_seed(base_seed, r);
}

// Evaluates fn(r, seed) for r in [0, n) on a worker pool; results are in
// replication order whatever the execution order was.
template <typename Fn>
auto map_replications(int n, std::uint64_t base_seed, Fn&& fn, unsigned threads = 0)
    -> std::vector<std::invoke_result_t<Fn&, int, std::uint64_t>> {
  using R = std::invoke_result_t<Fn&, int, std::uint64_t>;
  if (n < 1) throw ValidationError("replication count must be >= 1");
  std::vector<std::optional<R>> slots(static_cast<std::size_t>(n));
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(n));

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (int r = next++; r < n; r = next++) {
      try {
        slots[r].emplace(fn(r, replication_seed(base_seed, static_cast<std::uint64_t>(r))));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<R> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

inline std::vector<Trace> run_replications(const EpisodeConfig& config, int n,
                                           std::uint64_t base_seed) {
  return map_replications(n, base_seed, [&](int, std::uint64_t seed) {
    EpisodeConfig c = config;
    c.seed = seed;
    return run_episode(c);
  });
}

// Feeds the recorded reports, utilities, audit decisions and flags back
// through the mechanism and returns the outcomes it produces.
inline std::vector<RoundOutcome> replay(const EpisodeConfig& config, const Trace& trace) {
  const ScenarioSpec& sc = config.scenario;
  FairShareCache shares(sc, derive_seed(trace.seed, EpisodeStreams::kFairShares));
  MechanismState st = MechanismState::initial(sc);
  std::vector<RoundOutcome> out;
  out.reserve(trace.rounds.size());
  for (const RoundRecord& rec : trace.rounds) {
    auto coin = [&](double) { return rec.outcome.audited; };
    auto poll = [&](AgentId, double, const MechanismState&) { return rec.outcome.flags; };
    out.push_back(detail::dispatch_step(config.mechanism, st, rec.reports, rec.utilities,
                                        shares, poll, coin));
  }
  return out;
}

}  // namespace adaudit
