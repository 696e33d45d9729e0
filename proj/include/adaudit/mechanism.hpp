#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "adaudit/distributions.hpp"
#include "adaudit/errors.hpp"
#include "adaudit/rng.hpp"

namespace adaudit {

// Marks an absent entry in a per-agent report vector.
inline constexpr double kNoReport = std::numeric_limits<double>::quiet_NaN();

// One entry per agent (index agent-1); entries of eliminated agents hold
// kNoReport.
using Reports = std::vector<double>;

struct AdaAudit {};
struct FixedProb {
  double p;
};
// Fair shares for these two are supplied per round by the caller and follow
// the current alive set.
struct IdealOracle {};
struct Auxiliary {};

using MechanismKind = std::variant<AdaAudit, FixedProb, IdealOracle, Auxiliary>;

inline void validate(const MechanismKind& kind) {
  if (const auto* f = std::get_if<FixedProb>(&kind)) {
    if (!(f->p > 0.0 && f->p <= 1.0)) {
      throw ValidationError("fixed audit probability must lie in (0,1]");
    }
  }
}

inline std::string mechanism_name(const MechanismKind& kind) {
  return std::visit(
      [](const auto& m) -> std::string {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, AdaAudit>) return "adaaudit";
        else if constexpr (std::is_same_v<M, FixedProb>) return "fixed";
        else if constexpr (std::is_same_v<M, IdealOracle>) return "ideal";
        else return "auxiliary";
      },
      kind);
}

struct MechanismState {
  int K = 0;
  int T = 0;
  double c = 0.0;

  int t = 1;
  AgentSet alive;
  int epoch = 1;
  int epoch_start = 1;
  std::vector<double> q_hat;   // 0 means the agent is still being estimated
  std::vector<int> epoch_wins; // wins in [epoch_start, t-1]

  static MechanismState initial(const ScenarioSpec& s) {
    MechanismState st;
    st.K = s.K();
    st.T = s.T();
    st.c = s.c();
    st.alive = s.everyone();
    st.q_hat.assign(st.K, 0.0);
    st.epoch_wins.assign(st.K, 0);
    return st;
  }

  double q_hat_of(AgentId i) const { return q_hat[i - 1]; }
};

struct Proposal {
  AgentId agent;
  double q_hat;
};

struct RoundOutcome {
  int t = 0;
  AgentId winner = kNobody;
  double audit_probability = 0.0;
  bool audited = false;
  double observed_utility = 0.0;  // audited ? u_winner : 0
  AgentId eliminated = kNobody;
  std::optional<Proposal> proposal;
  bool installed = false;         // proposal accepted without flags
  std::vector<int> flags;         // K answers when a proposal was polled
};

// Decides an audit given its probability.
template <typename C>
concept AuditCoin = requires(C coin, double p) {
  { coin(p) } -> std::convertible_to<bool>;
};

// Answers a freshly proposed estimate with one flag per agent.
template <typename F>
concept FlagPoll = requires(F poll, AgentId winner, double q_hat, const MechanismState& st) {
  { poll(winner, q_hat, st) } -> std::convertible_to<std::vector<int>>;
};

// Draws one uniform per decision from the mechanism stream.
struct RandomCoin {
  Stream* rng;
  bool operator()(double p) const { return rng->bernoulli(p); }
};

inline double audit_probability(const MechanismState& st, AgentId winner) {
  const double q_hat = st.q_hat_of(winner);
  if (q_hat == 0.0 || st.t >= st.T) return 1.0;
  const double k2 = static_cast<double>(st.K) * st.K;
  return std::min(8.0 * k2 / ((st.T - st.t) * q_hat * st.c), 1.0);
}

inline double ideal_audit_probability(int T, int t, double mu) {
  if (mu == 0.0 || t >= T) return 1.0;
  return std::min(1.0 / ((T - t) * mu), 1.0);
}

// Mark-up threshold 2K^2 / ((T-t) q c) of the auxiliary game. Infinite when
// q = 0 or t = T.
inline double auxiliary_pressure(int K, int T, int t, double q, double c) {
  if (q == 0.0 || t >= T) return std::numeric_limits<double>::infinity();
  return 2.0 * K * K / ((T - t) * q * c);
}

namespace detail {

inline void validate_reports(const MechanismState& st, std::span<const double> reports) {
  if (static_cast<int>(reports.size()) != st.K) {
    throw MissingReport("expected " + std::to_string(st.K) + " report slots");
  }
  for (AgentId i = 1; i <= st.K; ++i) {
    const double v = reports[i - 1];
    if (st.alive.contains(i)) {
      if (std::isnan(v)) throw MissingReport("alive agent " + std::to_string(i) + " did not report");
      if (v < 0.0 || v > 1.0) {
        throw ReportOutOfRange("agent " + std::to_string(i) + " reported " + std::to_string(v));
      }
    } else if (!std::isnan(v)) {
      throw ReportFromEliminatedAgent("eliminated agent " + std::to_string(i) + " reported");
    }
  }
}

inline void eliminate(MechanismState& st, AgentId w, bool new_epoch) {
  st.alive.erase(w);
  if (new_epoch) {
    ++st.epoch;
    st.epoch_start = st.t + 1;
    std::fill(st.q_hat.begin(), st.q_hat.end(), 0.0);
    std::fill(st.epoch_wins.begin(), st.epoch_wins.end(), 0);
  }
}

}  // namespace detail

// One round of AdaAudit. Mutates `st` and advances its round counter.
template <AuditCoin Coin, FlagPoll Poll>
RoundOutcome step_adaaudit(MechanismState& st, std::span<const double> reports,
                           std::span<const double> utils, Poll&& poll, Coin&& coin) {
  detail::validate_reports(st, reports);
  RoundOutcome out;
  out.t = st.t;
  const AgentId w = lex_winner(reports, st.alive);
  if (w == kNobody || reports[w - 1] < st.c) {
    ++st.t;
    return out;
  }
  out.winner = w;
  out.audit_probability = audit_probability(st, w);
  out.audited = coin(out.audit_probability);
  out.observed_utility = out.audited ? utils[w - 1] : 0.0;
  ++st.epoch_wins[w - 1];

  if (out.audited && out.observed_utility < reports[w - 1]) {
    out.eliminated = w;
    detail::eliminate(st, w, /*new_epoch=*/true);
  } else if (st.q_hat[w - 1] == 0.0) {
    const double window = st.t - st.epoch_start + 1;
    const double proposed = st.epoch_wins[w - 1] / window;
    out.proposal = Proposal{w, proposed};
    out.flags = poll(w, proposed, static_cast<const MechanismState&>(st));
    const bool flagged = std::any_of(out.flags.begin(), out.flags.end(),
                                     [](int f) { return f != 0; });
    if (!flagged) {
      st.q_hat[w - 1] = proposed;
      out.installed = true;
    }
  }
  ++st.t;
  return out;
}

// Fixed-probability auditing. No c threshold; any audited discrepancy
// (including a mark-down) eliminates the winner.
template <AuditCoin Coin>
RoundOutcome step_fixedprob(MechanismState& st, std::span<const double> reports,
                            std::span<const double> utils, Coin&& coin, double p) {
  detail::validate_reports(st, reports);
  RoundOutcome out;
  out.t = st.t;
  const AgentId w = lex_winner(reports, st.alive);
  if (w != kNobody) {
    out.winner = w;
    out.audit_probability = p;
    out.audited = coin(p);
    out.observed_utility = out.audited ? utils[w - 1] : 0.0;
    if (out.audited && out.observed_utility != reports[w - 1]) {
      out.eliminated = w;
      detail::eliminate(st, w, /*new_epoch=*/false);
    }
  }
  ++st.t;
  return out;
}

// Ideal mechanism with known fair shares `mu` (indexed agent-1) for the
// current alive set.
template <AuditCoin Coin>
RoundOutcome step_ideal(MechanismState& st, std::span<const double> reports,
                        std::span<const double> utils, Coin&& coin,
                        std::span<const double> mu) {
  detail::validate_reports(st, reports);
  RoundOutcome out;
  out.t = st.t;
  const AgentId w = lex_winner(reports, st.alive);
  if (w != kNobody) {
    out.winner = w;
    out.audit_probability = ideal_audit_probability(st.T, st.t, mu[w - 1]);
    out.audited = coin(out.audit_probability);
    out.observed_utility = out.audited ? utils[w - 1] : 0.0;
    if (out.audited && out.observed_utility < reports[w - 1]) {
      out.eliminated = w;
      detail::eliminate(st, w, /*new_epoch=*/false);
    }
  }
  ++st.t;
  return out;
}

// Auxiliary game: no audits, winning mark-ups are eliminated outright, and
// mark-ups are illegal for agents whose pressure 2K^2/((T-t)qc) is <= 1.
inline RoundOutcome step_auxiliary(MechanismState& st, std::span<const double> reports,
                                   std::span<const double> utils,
                                   std::span<const double> q) {
  detail::validate_reports(st, reports);
  st.alive.for_each([&](AgentId i) {
    const double pressure = auxiliary_pressure(st.K, st.T, st.t, q[i - 1], st.c);
    if (pressure <= 1.0 && reports[i - 1] > utils[i - 1]) {
      throw RestrictedMarkUp("agent " + std::to_string(i) + " marked up at round " +
                             std::to_string(st.t) + " where mark-ups are not allowed");
    }
  });
  RoundOutcome out;
  out.t = st.t;
  const AgentId w = lex_winner(reports, st.alive);
  if (w != kNobody) {
    out.winner = w;
    if (reports[w - 1] > utils[w - 1]) {
      out.eliminated = w;
      detail::eliminate(st, w, /*new_epoch=*/false);
    }
  }
  ++st.t;
  return out;
}

}  // namespace adaudit
