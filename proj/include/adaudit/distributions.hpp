#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "adaudit/errors.hpp"
#include "adaudit/rng.hpp"

namespace adaudit {

// Agents are numbered 1..K. Index 0 means "nobody".
using AgentId = int;
inline constexpr AgentId kNobody = 0;
inline constexpr int kMaxAgents = 64;

inline constexpr double kProbTolerance = 1e-12;

// Set of agent ids backed by a 64-bit mask (bit i-1 <-> agent i).
class AgentSet {
 public:
  constexpr AgentSet() = default;
  constexpr explicit AgentSet(std::uint64_t mask) : mask_(mask) {}
  AgentSet(std::initializer_list<AgentId> ids) {
    for (AgentId i : ids) insert(i);
  }

  static constexpr AgentSet all(int k) {
    return AgentSet(k >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << k) - 1));
  }

  constexpr bool contains(AgentId i) const {
    return i >= 1 && i <= kMaxAgents && ((mask_ >> (i - 1)) & 1U);
  }
  constexpr void insert(AgentId i) { mask_ |= std::uint64_t{1} << (i - 1); }
  constexpr void erase(AgentId i) { mask_ &= ~(std::uint64_t{1} << (i - 1)); }
  constexpr int size() const { return std::popcount(mask_); }
  constexpr bool empty() const { return mask_ == 0; }
  constexpr std::uint64_t mask() const { return mask_; }

  std::vector<AgentId> members() const {
    std::vector<AgentId> out;
    for (std::uint64_t m = mask_; m != 0; m &= m - 1) {
      out.push_back(std::countr_zero(m) + 1);
    }
    return out;
  }

  // Calls fn(id) for each member in increasing order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (std::uint64_t m = mask_; m != 0; m &= m - 1) {
      fn(static_cast<AgentId>(std::countr_zero(m) + 1));
    }
  }

  friend constexpr bool operator==(AgentSet, AgentSet) = default;
  constexpr bool is_subset_of(AgentSet other) const {
    return (mask_ & ~other.mask_) == 0;
  }

 private:
  std::uint64_t mask_ = 0;
};

struct Atom {
  double value;
  double prob;
};

// A bounded utility law on [0,1]. Built only through the validating factories.
class UtilitySpec {
 public:
  struct PointMass {
    double value;
  };
  struct DiscreteTable {
    std::vector<Atom> atoms;  // strictly increasing values, probs sum to 1
  };
  struct Uniform {
    double lo, hi;
  };
  // hi with probability p, else lo.
  struct ScaledBernoulli {
    double lo, hi, p;
  };
  using Variant = std::variant<PointMass, DiscreteTable, Uniform, ScaledBernoulli>;

  static UtilitySpec point(double v) {
    check_unit(v, "point mass value");
    return UtilitySpec(PointMass{v});
  }

  // Duplicate values are merged and atoms sorted by value.
  static UtilitySpec discrete(std::vector<Atom> atoms) {
    if (atoms.empty()) throw ValidationError("discrete table has no atoms");
    std::map<double, double> merged;
    double total = 0.0;
    for (const Atom& a : atoms) {
      check_unit(a.value, "discrete atom value");
      check_unit(a.prob, "discrete atom probability");
      merged[a.value] += a.prob;
      total += a.prob;
    }
    if (std::abs(total - 1.0) > kProbTolerance) {
      throw ValidationError("discrete table probabilities sum to " +
                            std::to_string(total) + ", expected 1");
    }
    DiscreteTable table;
    for (auto [v, p] : merged) table.atoms.push_back({v, p});
    return UtilitySpec(std::move(table));
  }

  static UtilitySpec uniform(double lo, double hi) {
    check_unit(lo, "uniform lower bound");
    check_unit(hi, "uniform upper bound");
    if (lo > hi) throw ValidationError("uniform requires lo <= hi");
    return UtilitySpec(Uniform{lo, hi});
  }

  static UtilitySpec scaled_bernoulli(double lo, double hi, double p) {
    check_unit(lo, "bernoulli low value");
    check_unit(hi, "bernoulli high value");
    check_unit(p, "bernoulli probability");
    if (lo > hi) throw ValidationError("scaled bernoulli requires lo <= hi");
    return UtilitySpec(ScaledBernoulli{lo, hi, p});
  }

  const Variant& variant() const { return v_; }

  // Finite support with positive-probability atoms in increasing order, or
  // nullopt for continuous laws.
  std::optional<std::vector<Atom>> atoms() const {
    return std::visit(
        [](const auto& d) -> std::optional<std::vector<Atom>> {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, PointMass>) {
            return std::vector<Atom>{{d.value, 1.0}};
          } else if constexpr (std::is_same_v<D, DiscreteTable>) {
            std::vector<Atom> out;
            for (const Atom& a : d.atoms)
              if (a.prob > 0.0) out.push_back(a);
            return out;
          } else if constexpr (std::is_same_v<D, Uniform>) {
            return std::nullopt;
          } else {
            if (d.lo == d.hi || d.p == 0.0) return std::vector<Atom>{{d.lo, 1.0}};
            if (d.p == 1.0) return std::vector<Atom>{{d.hi, 1.0}};
            return std::vector<Atom>{{d.lo, 1.0 - d.p}, {d.hi, d.p}};
          }
        },
        v_);
  }

  double mean() const {
    if (auto* u = std::get_if<Uniform>(&v_)) return 0.5 * (u->lo + u->hi);
    double m = 0.0;
    const auto support = atoms();
    for (const Atom& a : *support) m += a.value * a.prob;
    return m;
  }

  // Support contained in [c, 1].
  bool supported_at_or_above(double c) const {
    if (auto* u = std::get_if<Uniform>(&v_)) return u->lo >= c;
    const auto support = atoms();
    for (const Atom& a : *support)
      if (a.value < c) return false;
    return true;
  }

  // Consumes exactly one uniform from the stream.
  double sample(Stream& rng) const {
    const double x = rng.uniform01();
    return std::visit(
        [x](const auto& d) -> double {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, PointMass>) {
            return d.value;
          } else if constexpr (std::is_same_v<D, DiscreteTable>) {
            double acc = 0.0;
            for (const Atom& a : d.atoms) {
              acc += a.prob;
              if (x < acc) return a.value;
            }
            return d.atoms.back().value;
          } else if constexpr (std::is_same_v<D, Uniform>) {
            return d.lo + (d.hi - d.lo) * x;
          } else {
            return x < d.p ? d.hi : d.lo;
          }
        },
        v_);
  }

 private:
  explicit UtilitySpec(Variant v) : v_(std::move(v)) {}

  static void check_unit(double x, const char* what) {
    if (!(x >= 0.0 && x <= 1.0)) {
      throw ValidationError(std::string(what) + " must lie in [0,1], got " +
                            std::to_string(x));
    }
  }

  Variant v_;
};

inline double sample(const UtilitySpec& spec, Stream& rng) { return spec.sample(rng); }

class ScenarioSpec {
 public:
  ScenarioSpec(int horizon, double c, std::vector<UtilitySpec> dists)
      : T_(horizon), c_(c), dists_(std::move(dists)) {
    const int k = static_cast<int>(dists_.size());
    if (k < 2) throw ValidationError("scenario needs K >= 2 agents");
    if (k > kMaxAgents) throw ValidationError("scenario supports at most 64 agents");
    if (T_ < 1) throw ValidationError("horizon T must be >= 1");
    if (!(c_ > 0.0 && c_ <= 1.0)) throw ValidationError("c must lie in (0,1]");
    has_anchor_ = std::any_of(dists_.begin(), dists_.end(),
                               [this](const UtilitySpec& d) {
                                 return d.supported_at_or_above(c_);
                               });
  }

  int K() const { return static_cast<int>(dists_.size()); }
  int T() const { return T_; }
  double c() const { return c_; }
  const UtilitySpec& dist(AgentId i) const { return dists_.at(i - 1); }
  const std::vector<UtilitySpec>& dists() const { return dists_; }
  AgentSet everyone() const { return AgentSet::all(K()); }

  // Some agent's law is supported on [c, 1].
  bool has_anchor_agent() const { return has_anchor_; }

  bool finite_support() const {
    return std::all_of(dists_.begin(), dists_.end(),
                       [](const UtilitySpec& d) { return d.atoms().has_value(); });
  }

  ScenarioSpec with_horizon(int horizon) const { return ScenarioSpec(horizon, c_, dists_); }

 private:
  int T_;
  double c_;
  std::vector<UtilitySpec> dists_;
  bool has_anchor_ = false;
};

// Highest value wins; equal values go to the higher index.
inline AgentId lex_winner(std::span<const double> values, AgentSet contenders) {
  AgentId best = kNobody;
  double best_value = 0.0;
  contenders.for_each([&](AgentId i) {
    const double v = values[i - 1];
    if (best == kNobody || v >= best_value) {
      best = i;
      best_value = v;
    }
  });
  return best;
}

struct FairShares {
  enum class Method { kExact, kMonteCarlo };

  AgentSet alive;
  std::vector<double> q;   // indexed by agent-1; zero outside `alive`
  std::vector<double> mu;
  Method method = Method::kExact;
  long samples = 0;                 // Monte Carlo only
  std::vector<double> q_stderr;     // Monte Carlo only
  std::vector<double> mu_stderr;    // Monte Carlo only

  double q_of(AgentId i) const { return q[i - 1]; }
  double mu_of(AgentId i) const { return mu[i - 1]; }
};

inline FairShares exact_fair_shares(const ScenarioSpec& scenario, AgentSet alive) {
  const int k = scenario.K();
  std::vector<std::vector<Atom>> support(k);
  alive.for_each([&](AgentId i) {
    auto atoms = scenario.dist(i).atoms();
    if (!atoms) {
      throw ContinuousSupport("agent " + std::to_string(i) +
                              " has a continuous law; use mc_fair_shares");
    }
    support[i - 1] = std::move(*atoms);
  });

  auto prob_below = [&](AgentId j, double v, bool inclusive) {
    double p = 0.0;
    for (const Atom& a : support[j - 1]) {
      if (a.value < v || (inclusive && a.value == v)) p += a.prob;
    }
    return p;
  };

  FairShares out;
  out.alive = alive;
  out.q.assign(k, 0.0);
  out.mu.assign(k, 0.0);
  alive.for_each([&](AgentId i) {
    for (const Atom& a : support[i - 1]) {
      if (a.value < scenario.c()) continue;
      double p = a.prob;
      alive.for_each([&](AgentId j) {
        if (j != i) p *= prob_below(j, a.value, /*inclusive=*/j < i);
      });
      out.q[i - 1] += p;
      out.mu[i - 1] += p * a.value;
    }
  });
  return out;
}

inline FairShares mc_fair_shares(const ScenarioSpec& scenario, AgentSet alive, long n,
                                 Stream& rng) {
  if (n < 1) throw ValidationError("monte carlo fair shares need n >= 1");
  const int k = scenario.K();
  std::vector<double> draw(k, 0.0);
  std::vector<long> wins(k, 0);
  // Welford running mean and sum of squared deviations of u_i * 1[i wins].
  std::vector<double> gain_mean(k, 0.0), gain_m2(k, 0.0);
  for (long s = 0; s < n; ++s) {
    alive.for_each([&](AgentId i) { draw[i - 1] = scenario.dist(i).sample(rng); });
    AgentId w = lex_winner(draw, alive);
    if (w != kNobody && draw[w - 1] < scenario.c()) w = kNobody;
    if (w != kNobody) ++wins[w - 1];
    const double count = static_cast<double>(s + 1);
    alive.for_each([&](AgentId i) {
      const double x = i == w ? draw[i - 1] : 0.0;
      const double delta = x - gain_mean[i - 1];
      gain_mean[i - 1] += delta / count;
      gain_m2[i - 1] += delta * (x - gain_mean[i - 1]);
    });
  }
  FairShares out;
  out.alive = alive;
  out.method = FairShares::Method::kMonteCarlo;
  out.samples = n;
  out.q.assign(k, 0.0);
  out.mu.assign(k, 0.0);
  out.q_stderr.assign(k, 0.0);
  out.mu_stderr.assign(k, 0.0);
  const double nn = static_cast<double>(n);
  alive.for_each([&](AgentId i) {
    const double q = wins[i - 1] / nn;
    out.q[i - 1] = q;
    out.mu[i - 1] = gain_mean[i - 1];
    out.q_stderr[i - 1] = std::sqrt(q * (1.0 - q) / nn);
    out.mu_stderr[i - 1] = std::sqrt(gain_m2[i - 1] / nn / nn);
  });
  return out;
}

// Fair shares per alive set for one scenario, computed on first use. Exact
// for finite supports, otherwise Monte Carlo with a fixed seed so that the
// cached values are a pure function of (scenario, alive, seed). Not
// thread-safe; each episode owns its own cache.
class FairShareCache {
 public:
  static constexpr long kDefaultMcSamples = 200000;

  explicit FairShareCache(const ScenarioSpec& scenario, std::uint64_t mc_seed = 0,
                          long mc_samples = kDefaultMcSamples)
      : scenario_(&scenario), exact_(scenario.finite_support()),
        mc_seed_(mc_seed), mc_samples_(mc_samples) {}

  const FairShares& get(AgentSet alive) {
    auto it = cache_.find(alive.mask());
    if (it != cache_.end()) return it->second;
    FairShares fs;
    if (exact_) {
      fs = exact_fair_shares(*scenario_, alive);
    } else {
      Stream rng(derive_seed(mc_seed_, alive.mask()));
      fs = mc_fair_shares(*scenario_, alive, mc_samples_, rng);
    }
    return cache_.emplace(alive.mask(), std::move(fs)).first->second;
  }

  const ScenarioSpec& scenario() const { return *scenario_; }

 private:
  const ScenarioSpec* scenario_;
  bool exact_;
  std::uint64_t mc_seed_;
  long mc_samples_;
  std::map<std::uint64_t, FairShares> cache_;
};

}  // namespace adaudit
