#include "adaudit/engine.hpp"

#include <random>
#include <set>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "adaudit/config.hpp"
#include "adaudit/io.hpp"
#include "test_support.hpp"

namespace adaudit {
namespace {

ScenarioSpec points_06_04(int T) {
  return ScenarioSpec(T, 0.3, {UtilitySpec::point(0.6), UtilitySpec::point(0.4)});
}

void expect_same_outcome(const RoundOutcome& a, const RoundOutcome& b) {
  EXPECT_EQ(a.t, b.t);
  EXPECT_EQ(a.winner, b.winner);
  EXPECT_EQ(a.audit_probability, b.audit_probability);
  EXPECT_EQ(a.audited, b.audited);
  EXPECT_EQ(a.observed_utility, b.observed_utility);
  EXPECT_EQ(a.eliminated, b.eliminated);
  EXPECT_EQ(a.proposal.has_value(), b.proposal.has_value());
  if (a.proposal && b.proposal) {
    EXPECT_EQ(a.proposal->agent, b.proposal->agent);
    EXPECT_EQ(a.proposal->q_hat, b.proposal->q_hat);
  }
  EXPECT_EQ(a.installed, b.installed);
  EXPECT_EQ(a.flags, b.flags);
}

void expect_same_trace(const Trace& a, const Trace& b) {
  ASSERT_EQ(a.rounds.size(), b.rounds.size());
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_EQ(a.final_alive, b.final_alive);
  EXPECT_EQ(a.epoch_boundaries, b.epoch_boundaries);
  for (std::size_t t = 0; t < a.rounds.size(); ++t) {
    expect_same_outcome(a.rounds[t].outcome, b.rounds[t].outcome);
    EXPECT_EQ(a.rounds[t].utilities, b.rounds[t].utilities);
    EXPECT_EQ(a.rounds[t].alive_before, b.rounds[t].alive_before);
    for (std::size_t i = 0; i < a.rounds[t].reports.size(); ++i) {
      const double x = a.rounds[t].reports[i], y = b.rounds[t].reports[i];
      EXPECT_TRUE((std::isnan(x) && std::isnan(y)) || x == y);
    }
  }
}

TEST(RunEpisodeTest, TwoPointMassesFiveRounds) {
  const auto cfg = EpisodeConfig::honest(points_06_04(5), AdaAudit{}, 1);
  const Trace tr = run_episode(cfg);
  ASSERT_EQ(tr.rounds.size(), 5u);
  int audits = 0;
  for (const RoundRecord& r : tr.rounds) {
    EXPECT_EQ(r.outcome.winner, 1);
    EXPECT_EQ(r.outcome.eliminated, kNobody);
    audits += r.outcome.audited;
  }
  // q_hat = 1 after round 1; audit probability 8*4/((5-t)*0.3) > 1 for t <= 4.
  EXPECT_EQ(audits, 5);
  EXPECT_EQ(tr.final_alive, (AgentSet{1, 2}));
  EXPECT_EQ(tr.epoch_boundaries, std::vector<int>{1});
}

TEST(RunEpisodeTest, ScriptedMarkUpIsCaughtInRoundOne) {
  auto cfg = EpisodeConfig::honest(points_06_04(5), AdaAudit{}, 1);
  cfg.reports[1] = Scripted{{{1, 0.9}}};
  const Trace tr = run_episode(cfg);
  EXPECT_EQ(tr.rounds[0].outcome.winner, 2);
  EXPECT_EQ(tr.rounds[0].outcome.eliminated, 2);
  EXPECT_EQ(tr.final_alive, AgentSet{1});
  EXPECT_EQ(tr.epoch_boundaries, (std::vector<int>{1, 2}));
  EXPECT_TRUE(std::isnan(tr.rounds[1].reports[1]));
}

TEST(RunEpisodeTest, SingleRoundHorizon) {
  const Trace tr = run_episode(EpisodeConfig::honest(points_06_04(1), AdaAudit{}, 3));
  ASSERT_EQ(tr.rounds.size(), 1u);
  EXPECT_EQ(tr.rounds[0].outcome.audit_probability, 1.0);
}

TEST(RunEpisodeTest, RejectsMismatchedStrategies) {
  auto cfg = EpisodeConfig::honest(points_06_04(5), AdaAudit{}, 1);
  cfg.flags.pop_back();
  EXPECT_THROW(run_episode(cfg), ValidationError);
}

TEST(RunEpisodeTest, DeterministicPerSeed) {
  const auto cfg = EpisodeConfig::honest(library_scenario("mixed-3", std::nullopt, 500),
                                         AdaAudit{}, 99);
  expect_same_trace(run_episode(cfg), run_episode(cfg));
  auto other = cfg;
  other.seed = 100;
  const Trace a = run_episode(cfg), b = run_episode(other);
  bool differs = false;
  for (std::size_t t = 0; t < a.rounds.size(); ++t) differs |= a.rounds[t].utilities != b.rounds[t].utilities;
  EXPECT_TRUE(differs);
}

TEST(RunEpisodeTest, UtilityDrawsDoNotDependOnStrategies) {
  const ScenarioSpec s = library_scenario("mixed-3", std::nullopt, 300);
  const auto honest = EpisodeConfig::honest(s, AdaAudit{}, 5);
  auto deviant = honest;
  deviant.reports[0] = MarkUpAlways{1.0};
  deviant.reports[2] = MarkDown{0.3};
  const Trace a = run_episode(honest), b = run_episode(deviant);
  for (std::size_t t = 0; t < a.rounds.size(); ++t) {
    EXPECT_EQ(a.rounds[t].utilities, b.rounds[t].utilities);
  }
}

TEST(RunEpisodeTest, TraceInvariants) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 40; ++trial) {
    const ScenarioSpec s = testing::random_discrete_scenario(gen, 2 + trial % 4, 200, 0.3);
    auto cfg = EpisodeConfig::honest(s, AdaAudit{}, trial);
    cfg.reports[trial % s.K()] = MarkUpAlways{1.0};
    const Trace tr = run_episode(cfg);
    ASSERT_EQ(static_cast<int>(tr.rounds.size()), s.T());
    EXPECT_EQ(tr.epoch_boundaries.front(), 1);
    for (std::size_t e = 1; e < tr.epoch_boundaries.size(); ++e) {
      EXPECT_LT(tr.epoch_boundaries[e - 1], tr.epoch_boundaries[e]);
    }
    AgentSet alive = s.everyone();
    int eliminations = 0;
    for (const RoundRecord& r : tr.rounds) {
      EXPECT_EQ(r.alive_before, alive);
      EXPECT_GE(r.outcome.audit_probability, 0.0);
      EXPECT_LE(r.outcome.audit_probability, 1.0);
      if (r.outcome.winner != kNobody) {
        EXPECT_TRUE(alive.contains(r.outcome.winner));
        EXPECT_GE(r.reports[r.outcome.winner - 1], s.c());
      }
      if (r.outcome.eliminated != kNobody) {
        EXPECT_EQ(r.outcome.eliminated, r.outcome.winner);
        alive.erase(r.outcome.eliminated);
        ++eliminations;
      }
    }
    EXPECT_EQ(alive, tr.final_alive);
    EXPECT_EQ(static_cast<int>(tr.epoch_boundaries.size()), 1 + eliminations);
    EXPECT_TRUE(tr.final_alive.is_subset_of(s.everyone()));
  }
}

TEST(RunEpisodeTest, AuxiliaryRaisesOnRestrictedMarkUp) {
  auto cfg = EpisodeConfig::honest(points_06_04(10000), Auxiliary{}, 1);
  cfg.reports[0] = MarkUpAlways{1.0};
  EXPECT_THROW(run_episode(cfg), RestrictedMarkUp);
}

TEST(ReplicationTest, OrderAndSeeds) {
  const auto cfg = EpisodeConfig::honest(points_06_04(3), AdaAudit{});
  const auto traces = run_replications(cfg, 5, 42);
  ASSERT_EQ(traces.size(), 5u);
  std::set<std::uint64_t> seeds;
  for (int r = 0; r < 5; ++r) {
    EXPECT_EQ(traces[r].seed, replication_seed(42, r));
    seeds.insert(traces[r].seed);
  }
  EXPECT_EQ(seeds.size(), 5u);
  EXPECT_THROW(run_replications(cfg, 0, 42), ValidationError);
}

TEST(ReplicationTest, ThreadCountDoesNotChangeResults) {
  auto fn = [](int r, std::uint64_t seed) {
    Stream s(seed);
    return s.next_u64() ^ static_cast<std::uint64_t>(r);
  };
  const auto one = map_replications(64, 9, fn, 1);
  const auto many = map_replications(64, 9, fn, 8);
  EXPECT_EQ(one, many);
}

TEST(ReplicationTest, ExceptionsPropagate) {
  auto fn = [](int r, std::uint64_t) -> int {
    if (r == 3) throw ValidationError("boom");
    return r;
  };
  EXPECT_THROW(map_replications(8, 0, fn, 4), ValidationError);
}

TEST(ReplicationTest, RandomScenarioVariesAcrossSeeds) {
  const auto cfg = EpisodeConfig::honest(library_scenario("mixed-3", std::nullopt, 3000),
                                         AdaAudit{});
  const auto traces = run_replications(cfg, 10, 1);
  std::set<long> audit_counts;
  for (const Trace& t : traces) {
    long a = 0;
    for (const auto& r : t.rounds) a += r.outcome.audited;
    audit_counts.insert(a);
  }
  EXPECT_GT(audit_counts.size(), 1u);
}

class ReplayTest : public ::testing::TestWithParam<MechanismKind> {};

TEST_P(ReplayTest, ReproducesEveryOutcome) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 10; ++trial) {
    const ScenarioSpec s = testing::random_discrete_scenario(gen, 3, 300, 0.25);
    auto cfg = EpisodeConfig::honest(s, GetParam(), trial);
    if (!std::holds_alternative<Auxiliary>(GetParam())) {
      cfg.reports[0] = MarkUpAlways{1.0};
      cfg.reports[1] = MarkDown{0.5};
    }
    const Trace tr = run_episode(cfg);
    const auto outcomes = replay(cfg, tr);
    ASSERT_EQ(outcomes.size(), tr.rounds.size());
    for (std::size_t t = 0; t < outcomes.size(); ++t) {
      expect_same_outcome(outcomes[t], tr.rounds[t].outcome);
    }

    // Through the on-disk trace format as well.
    std::stringstream ss;
    write_trace_ndjson(ss, tr, cfg);
    const ParsedTrace parsed = read_trace_ndjson(ss);
    EXPECT_EQ(parsed.config_hash, config_hash(canonical_json(cfg)));
    expect_same_trace(parsed.trace, tr);
    const auto again = replay(cfg, parsed.trace);
    for (std::size_t t = 0; t < again.size(); ++t) expect_same_outcome(again[t], tr.rounds[t].outcome);
  }
}

INSTANTIATE_TEST_SUITE_P(AllMechanisms, ReplayTest,
                         ::testing::Values(MechanismKind{AdaAudit{}}, MechanismKind{FixedProb{0.2}},
                                           MechanismKind{IdealOracle{}},
                                           MechanismKind{Auxiliary{}}),
                         [](const auto& info) { return mechanism_name(info.param); });

}  // namespace
}  // namespace adaudit
