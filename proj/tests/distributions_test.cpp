#include "adaudit/distributions.hpp"

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace adaudit {
namespace {

using testing::enumerate_fair_shares;
using testing::random_discrete_scenario;

ScenarioSpec lottery_pair(int T = 100) {
  return ScenarioSpec(T, 1.0 / 3.0,
                      {UtilitySpec::point(2.0 / 3.0),
                       UtilitySpec::scaled_bernoulli(1.0 / 3.0, 1.0, 1.0 / 3.0)});
}

TEST(SampleTest, PointMassIsConstant) {
  Stream rng(1);
  const auto d = UtilitySpec::point(2.0 / 3.0);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample(d, rng), 2.0 / 3.0);
}

TEST(SampleTest, DegenerateBernoulliReturnsLow) {
  Stream rng(2);
  const auto d = UtilitySpec::scaled_bernoulli(1.0 / 3.0, 1.0, 0.0);
  for (int i = 0; i < 1000; ++i) EXPECT_EQ(sample(d, rng), 1.0 / 3.0);
}

TEST(SampleTest, ScaledBernoulliMean) {
  Stream rng(3);
  const auto d = UtilitySpec::scaled_bernoulli(1.0 / 3.0, 1.0, 1.0 / 3.0);
  constexpr int kN = 1'000'000;
  double sum = 0.0;
  for (int i = 0; i < kN; ++i) sum += sample(d, rng);
  const double expected = (2.0 / 3.0) * (1.0 / 3.0) + 1.0 / 3.0;  // 5/9
  const double sd = (2.0 / 3.0) * std::sqrt((1.0 / 3.0) * (2.0 / 3.0));
  EXPECT_NEAR(sum / kN, expected, 3.0 * sd / std::sqrt(kN));
}

TEST(SampleTest, StaysInSupportAndIsDeterministic) {
  const auto d = UtilitySpec::discrete({{0.2, 0.5}, {0.7, 0.25}, {0.9, 0.25}});
  Stream a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    const double x = sample(d, a);
    EXPECT_TRUE(x == 0.2 || x == 0.7 || x == 0.9);
    EXPECT_EQ(x, sample(d, b));
  }
  const auto u = UtilitySpec::uniform(0.25, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const double x = sample(u, a);
    EXPECT_GE(x, 0.25);
    EXPECT_LE(x, 0.5);
  }
}

TEST(UtilitySpecTest, Validation) {
  EXPECT_THROW(UtilitySpec::point(1.5), ValidationError);
  EXPECT_THROW(UtilitySpec::uniform(0.6, 0.4), ValidationError);
  EXPECT_THROW(UtilitySpec::scaled_bernoulli(0.9, 0.1, 0.5), ValidationError);
  EXPECT_THROW(UtilitySpec::scaled_bernoulli(0.1, 0.9, 1.2), ValidationError);
  EXPECT_THROW(UtilitySpec::discrete({{0.2, 0.5}, {0.3, 0.4}}), ValidationError);
  EXPECT_THROW(UtilitySpec::discrete({{-0.1, 1.0}}), ValidationError);
  EXPECT_THROW(UtilitySpec::discrete({}), ValidationError);
  EXPECT_NO_THROW(UtilitySpec::discrete({{0.2, 0.5}, {0.3, 0.5 + 1e-13}}));
}

TEST(UtilitySpecTest, DiscreteAtomsMergedAndSorted) {
  const auto d = UtilitySpec::discrete({{0.8, 0.25}, {0.2, 0.5}, {0.8, 0.25}});
  const auto atoms = *d.atoms();
  ASSERT_EQ(atoms.size(), 2u);
  EXPECT_EQ(atoms[0].value, 0.2);
  EXPECT_EQ(atoms[1].value, 0.8);
  EXPECT_DOUBLE_EQ(atoms[1].prob, 0.5);
}

TEST(ScenarioSpecTest, AnchorAgentFlag) {
  EXPECT_TRUE(lottery_pair().has_anchor_agent());
  const ScenarioSpec violating(10, 0.5, {UtilitySpec::uniform(0.2, 1.0),
                                         UtilitySpec::scaled_bernoulli(0.1, 0.9, 0.9)});
  EXPECT_FALSE(violating.has_anchor_agent());
  EXPECT_THROW(ScenarioSpec(10, 0.0, {UtilitySpec::point(0.5), UtilitySpec::point(0.5)}),
               ValidationError);
  EXPECT_THROW(ScenarioSpec(0, 0.2, {UtilitySpec::point(0.5), UtilitySpec::point(0.5)}),
               ValidationError);
  EXPECT_THROW(ScenarioSpec(10, 0.2, {UtilitySpec::point(0.5)}), ValidationError);
}

TEST(LexWinnerTest, Examples) {
  EXPECT_EQ(lex_winner(std::vector<double>{0.5, 0.9}, AgentSet{1, 2}), 2);
  EXPECT_EQ(lex_winner(std::vector<double>{0.5, 0.5}, AgentSet{1, 2}), 2);
  EXPECT_EQ(lex_winner(std::vector<double>{0.0, 0.0, 0.2}, AgentSet{3}), 3);
  EXPECT_EQ(lex_winner(std::vector<double>{0.9, 0.5, 0.2}, AgentSet{}), kNobody);
  // Non-contenders are ignored even with higher values.
  EXPECT_EQ(lex_winner(std::vector<double>{0.9, 0.5, 0.2}, AgentSet{2, 3}), 2);
}

TEST(LexWinnerTest, TotalOnRandomInputs) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> grid(0, 4);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> v(6);
    for (double& x : v) x = grid(gen) / 4.0;
    const AgentSet contenders(gen() & 0x3f);
    const AgentId w = lex_winner(v, contenders);
    if (contenders.empty()) {
      EXPECT_EQ(w, kNobody);
      continue;
    }
    ASSERT_TRUE(contenders.contains(w));
    contenders.for_each([&](AgentId j) {
      if (j != w) EXPECT_TRUE(v[w - 1] > v[j - 1] || (v[w - 1] == v[j - 1] && w > j));
    });
  }
}

TEST(ExactFairSharesTest, LotteryPair) {
  // Oracle first: enumeration over the four joint outcomes.
  const ScenarioSpec s = lottery_pair();
  const auto oracle = enumerate_fair_shares(s, AgentSet{1, 2});
  EXPECT_NEAR(oracle.q[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(oracle.q[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(oracle.mu[0], 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(oracle.mu[1], 1.0 / 3.0, 1e-15);

  const FairShares fs = exact_fair_shares(s, AgentSet{1, 2});
  EXPECT_NEAR(fs.q_of(1), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(fs.q_of(2), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(fs.mu_of(1), 4.0 / 9.0, 1e-15);
  EXPECT_NEAR(fs.mu_of(2), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(fs.method, FairShares::Method::kExact);
}

TEST(ExactFairSharesTest, LoneAgentAboveC) {
  const ScenarioSpec s(10, 1.0 / 3.0, {UtilitySpec::point(0.5), UtilitySpec::point(0.9)});
  const FairShares fs = exact_fair_shares(s, AgentSet{1});
  EXPECT_EQ(fs.q_of(1), 1.0);
  EXPECT_EQ(fs.mu_of(1), 0.5);
  EXPECT_EQ(fs.q_of(2), 0.0);
}

TEST(ExactFairSharesTest, TieGoesToHigherIndex) {
  const ScenarioSpec s(10, 1.0 / 3.0, {UtilitySpec::point(0.5), UtilitySpec::point(0.5)});
  const FairShares fs = exact_fair_shares(s, s.everyone());
  EXPECT_EQ(fs.q_of(1), 0.0);
  EXPECT_EQ(fs.q_of(2), 1.0);
  EXPECT_EQ(fs.mu_of(1), 0.0);
  EXPECT_EQ(fs.mu_of(2), 0.5);
}

TEST(ExactFairSharesTest, ContinuousSupportRejected) {
  const ScenarioSpec s(10, 0.3, {UtilitySpec::uniform(0.3, 1.0), UtilitySpec::point(0.5)});
  EXPECT_THROW(exact_fair_shares(s, s.everyone()), ContinuousSupport);
  // Only alive agents matter.
  EXPECT_NO_THROW(exact_fair_shares(s, AgentSet{2}));
}

TEST(ExactFairSharesTest, MatchesEnumerationOnRandomScenarios) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + trial % 4;
    const ScenarioSpec s = random_discrete_scenario(gen, K, 10, 0.25);
    const AgentSet alive(gen() & AgentSet::all(K).mask());
    if (alive.empty()) continue;
    const auto oracle = enumerate_fair_shares(s, alive);
    const FairShares fs = exact_fair_shares(s, alive);
    for (AgentId i = 1; i <= K; ++i) {
      EXPECT_NEAR(fs.q_of(i), oracle.q[i - 1], 1e-12);
      EXPECT_NEAR(fs.mu_of(i), oracle.mu[i - 1], 1e-12);
    }
  }
}

TEST(FairSharesPropertyTest, BoundsAndMonotonicity) {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + trial % 5;
    const ScenarioSpec s = random_discrete_scenario(gen, K, 10, 0.3);
    const AgentSet alive(gen() & AgentSet::all(K).mask());
    if (alive.empty()) continue;
    const FairShares fs = exact_fair_shares(s, alive);
    double total = 0.0;
    alive.for_each([&](AgentId i) {
      EXPECT_GE(fs.q_of(i), 0.0);
      EXPECT_LE(fs.q_of(i), 1.0 + 1e-12);
      EXPECT_LE(fs.mu_of(i), 1.0 + 1e-12);
      EXPECT_GE(fs.mu_of(i), s.c() * fs.q_of(i) - 1e-12);
      total += fs.q_of(i);
    });
    EXPECT_LE(total, 1.0 + 1e-12);

    // Removing any one alive agent never lowers the survivors' shares.
    alive.for_each([&](AgentId gone) {
      AgentSet smaller = alive;
      smaller.erase(gone);
      const FairShares after = exact_fair_shares(s, smaller);
      smaller.for_each([&](AgentId i) {
        EXPECT_GE(after.q_of(i), fs.q_of(i) - 1e-12);
        EXPECT_GE(after.mu_of(i), fs.mu_of(i) - 1e-12);
      });
    });
  }
}

TEST(FairSharesPropertyTest, SumIsOneWhenAnAnchorAgentIsAlive) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 100; ++trial) {
    const int K = 2 + trial % 4;
    const ScenarioSpec s = random_discrete_scenario(gen, K, 10, 0.3);
    const AgentSet all = s.everyone();
    // Every alive set containing an anchor agent.
    for (std::uint64_t m = 1; m <= all.mask(); ++m) {
      const AgentSet alive(m);
      bool anchored = false;
      alive.for_each([&](AgentId i) { anchored |= s.dist(i).supported_at_or_above(s.c()); });
      if (!anchored) continue;
      const FairShares fs = exact_fair_shares(s, alive);
      double total = 0.0;
      alive.for_each([&](AgentId i) { total += fs.q_of(i); });
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(McFairSharesTest, LotteryPairWithinThreeStderr) {
  Stream rng(19);
  const FairShares fs = mc_fair_shares(lottery_pair(), AgentSet{1, 2}, 1'000'000, rng);
  EXPECT_EQ(fs.method, FairShares::Method::kMonteCarlo);
  EXPECT_NEAR(fs.q_of(1), 2.0 / 3.0, 3.0 * fs.q_stderr[0]);
  EXPECT_NEAR(fs.q_of(2), 1.0 / 3.0, 3.0 * fs.q_stderr[1]);
}

TEST(McFairSharesTest, SingleDrawWithPointMasses) {
  Stream rng(23);
  const ScenarioSpec s(10, 0.2, {UtilitySpec::point(0.4), UtilitySpec::point(0.9),
                                 UtilitySpec::point(0.3)});
  const FairShares fs = mc_fair_shares(s, s.everyone(), 1, rng);
  double total = 0.0;
  for (double q : fs.q) {
    EXPECT_TRUE(q == 0.0 || q == 1.0);
    total += q;
  }
  EXPECT_EQ(total, 1.0);
  EXPECT_EQ(fs.q_of(2), 1.0);
}

TEST(McFairSharesTest, RejectsZeroSamples) {
  Stream rng(1);
  EXPECT_THROW(mc_fair_shares(lottery_pair(), AgentSet{1, 2}, 0, rng), ValidationError);
}

TEST(McFairSharesTest, AgreesWithExactOnRandomScenarios) {
  std::mt19937_64 gen(29);
  Stream rng(31);
  constexpr long kN = 100'000;
  for (int trial = 0; trial < 20; ++trial) {
    const int K = 2 + trial % 4;
    const ScenarioSpec s = random_discrete_scenario(gen, K, 10, 0.25);
    const FairShares exact = exact_fair_shares(s, s.everyone());
    const FairShares mc = mc_fair_shares(s, s.everyone(), kN, rng);
    for (AgentId i = 1; i <= K; ++i) {
      const double q = exact.q_of(i);
      EXPECT_LE(std::abs(mc.q_of(i) - q), 4.0 * std::sqrt(q * (1.0 - q) / kN) + 1e-12)
          << "trial " << trial << " agent " << i;
    }
  }
}

TEST(FairShareCacheTest, ExactForDiscreteAndStableForContinuous) {
  const ScenarioSpec disc = lottery_pair();
  FairShareCache cache(disc);
  EXPECT_EQ(cache.get(AgentSet{1, 2}).method, FairShares::Method::kExact);
  EXPECT_NEAR(cache.get(AgentSet{1, 2}).q_of(1), 2.0 / 3.0, 1e-15);

  const ScenarioSpec cont(10, 0.3, {UtilitySpec::uniform(0.3, 1.0), UtilitySpec::uniform(0.0, 1.0)});
  FairShareCache a(cont, 5, 20000), b(cont, 5, 20000);
  EXPECT_EQ(a.get(cont.everyone()).q, b.get(cont.everyone()).q);
  EXPECT_EQ(a.get(cont.everyone()).method, FairShares::Method::kMonteCarlo);
}

}  // namespace
}  // namespace adaudit
