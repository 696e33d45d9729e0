#pragma once

#include <map>
#include <span>
#include <string>
#include <variant>

#include "adaudit/distributions.hpp"
#include "adaudit/mechanism.hpp"
#include "adaudit/rng.hpp"

namespace adaudit {

// What a strategy may look at when it reports or flags. Distributions are
// common knowledge, so fair shares of the current alive set are available
// through `shares`.
struct AgentView {
  int t = 1;
  int T = 1;
  int K = 0;
  double c = 0.0;
  AgentSet alive;
  AgentId self = kNobody;
  double utility = 0.0;
  std::span<const double> installed_estimates;
  FairShareCache* shares = nullptr;

  double fair_q(AgentId i) const { return shares->get(alive).q_of(i); }
};

struct Truthful {};
struct MarkUpAlways {
  double value;
};
// Reports 1 whenever the auxiliary-game pressure exceeds 1, else the truth.
struct MarkUpWhenUnwatched {};
struct MarkDown {
  double theta;  // in [0, 1)
};
// Fixed reports for listed rounds, truthful elsewhere.
struct Scripted {
  std::map<int, double> by_round;
};

using ReportStrategy =
    std::variant<Truthful, MarkUpAlways, MarkUpWhenUnwatched, MarkDown, Scripted>;

enum class FlagStrategy { kWellBehaved, kNever, kAlways, kSelfishUpOnly };

inline void validate(const ReportStrategy& s) {
  if (const auto* m = std::get_if<MarkUpAlways>(&s)) {
    if (!(m->value >= 0.0 && m->value <= 1.0)) {
      throw ValidationError("mark-up report must lie in [0,1]");
    }
  } else if (const auto* d = std::get_if<MarkDown>(&s)) {
    if (!(d->theta >= 0.0 && d->theta < 1.0)) {
      throw ValidationError("mark-down factor must lie in [0,1)");
    }
  } else if (const auto* sc = std::get_if<Scripted>(&s)) {
    for (auto [t, v] : sc->by_round) {
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("scripted report must lie in [0,1]");
    }
  }
}

// The strategies in this library are deterministic given the view; `rng` is
// the agent's own strategy stream and is left untouched by them.
inline double report(const ReportStrategy& strategy, const AgentView& view,
                     [[maybe_unused]] Stream& rng) {
  return std::visit(
      [&](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Truthful>) {
          return view.utility;
        } else if constexpr (std::is_same_v<S, MarkUpAlways>) {
          return s.value;
        } else if constexpr (std::is_same_v<S, MarkUpWhenUnwatched>) {
          const double pressure =
              auxiliary_pressure(view.K, view.T, view.t, view.fair_q(view.self), view.c);
          return pressure > 1.0 ? 1.0 : view.utility;
        } else if constexpr (std::is_same_v<S, MarkDown>) {
          return s.theta * view.utility;
        } else {
          auto it = s.by_round.find(view.t);
          return it == s.by_round.end() ? view.utility : it->second;
        }
      },
      strategy);
}

// `view.alive` must be the post-round alive set. Eliminated agents answer 0.
inline int flag(FlagStrategy strategy, const Proposal& proposal, const AgentView& view) {
  if (!view.alive.contains(view.self)) return 0;
  switch (strategy) {
    case FlagStrategy::kNever:
      return 0;
    case FlagStrategy::kAlways:
      return 1;
    case FlagStrategy::kSelfishUpOnly:
      return proposal.q_hat > 4.0 * view.fair_q(proposal.agent) ? 1 : 0;
    case FlagStrategy::kWellBehaved: {
      const double q = view.fair_q(proposal.agent);
      if (proposal.q_hat > 4.0 * q) return 1;
      return (view.self == proposal.agent && proposal.q_hat < q / 4.0) ? 1 : 0;
    }
  }
  return 0;
}

inline std::string report_name(const ReportStrategy& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using S = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<S, Truthful>) return "truthful";
        else if constexpr (std::is_same_v<S, MarkUpAlways>) return "markup";
        else if constexpr (std::is_same_v<S, MarkUpWhenUnwatched>) return "markup_unwatched";
        else if constexpr (std::is_same_v<S, MarkDown>) return "markdown";
        else return "scripted";
      },
      s);
}

inline std::string flag_name(FlagStrategy f) {
  switch (f) {
    case FlagStrategy::kWellBehaved: return "well_behaved";
    case FlagStrategy::kNever: return "never";
    case FlagStrategy::kAlways: return "always";
    case FlagStrategy::kSelfishUpOnly: return "selfish_up_only";
  }
  return "?";
}

}  // namespace adaudit
