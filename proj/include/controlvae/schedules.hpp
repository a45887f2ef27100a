#pragma once

// Set-point schedules v_kl(t) for the controller and open-loop beta(t)
// schedules for the annealing baselines. All schedules are pure functions of
// the step index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <type_traits>
#include <variant>

#include <json.hpp>

#include "controlvae/controller.hpp"

namespace controlvae {

struct ConstantSetpoint {
  double value = 0.0;
};

/// min(v0 + alpha * floor(t / period), cap)
struct CapacityStep {
  double v0 = 0.5;
  double alpha = 0.15;
  std::int64_t period = 5000;
  double cap = 18.0;
};

using SetpointSchedule = std::variant<ConstantSetpoint, CapacityStep>;

inline void validate(const SetpointSchedule& schedule) {
  std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantSetpoint>) {
          if (!std::isfinite(s.value) || s.value < 0)
            throw InputError("setpoint: constant value must be finite and >= 0");
        } else {
          if (!std::isfinite(s.v0) || s.v0 < 0) throw InputError("setpoint: v0 must be >= 0");
          if (!std::isfinite(s.alpha) || s.alpha <= 0) throw InputError("setpoint: alpha must be > 0");
          if (s.period < 1) throw InputError("setpoint: period must be >= 1");
          if (!std::isfinite(s.cap) || s.cap < s.v0) throw InputError("setpoint: cap must be >= v0");
        }
      },
      schedule);
}

inline double setpoint_at(const SetpointSchedule& schedule, std::int64_t t) {
  return std::visit(
      [t](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantSetpoint>) {
          return s.value;
        } else {
          const auto k = static_cast<double>(std::max<std::int64_t>(t, 0) / s.period);
          return std::min(s.v0 + s.alpha * k, s.cap);
        }
      },
      schedule);
}

struct ConstantBeta {
  double beta = 1.0;
};

/// 1 / (1 + exp(-slope * (t - midpoint))). A non-positive slope selects the
/// default 10 / midpoint.
struct SigmoidAnneal {
  double midpoint = 20000;
  double slope = 0.0;

  double effective_slope() const { return slope > 0 ? slope : 10.0 / midpoint; }
};

/// `cycles` cycles over `total_steps`; each ramps 0 -> 1 linearly over the first
/// `ramp_fraction` of the cycle and holds 1 for the rest.
struct CyclicalAnneal {
  std::int64_t cycles = 4;
  std::int64_t total_steps = 40000;
  double ramp_fraction = 0.5;
};

using BetaSchedule = std::variant<ConstantBeta, SigmoidAnneal, CyclicalAnneal>;

inline void validate(const BetaSchedule& schedule) {
  std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantBeta>) {
          if (!std::isfinite(s.beta) || s.beta < 0) throw InputError("beta schedule: beta must be >= 0");
        } else if constexpr (std::is_same_v<S, SigmoidAnneal>) {
          if (!std::isfinite(s.midpoint) || s.midpoint <= 0)
            throw InputError("beta schedule: midpoint must be > 0");
          if (!std::isfinite(s.slope) || s.slope < 0)
            throw InputError("beta schedule: slope must be >= 0");
        } else {
          if (s.cycles < 1) throw InputError("beta schedule: cycles must be >= 1");
          if (s.total_steps < s.cycles)
            throw InputError("beta schedule: total_steps must be >= cycles");
          if (!(s.ramp_fraction > 0 && s.ramp_fraction <= 1))
            throw InputError("beta schedule: ramp_fraction must lie in (0, 1]");
        }
      },
      schedule);
}

/// True when a cyclical schedule is queried past its planned length.
inline bool schedule_overrun(const BetaSchedule& schedule, std::int64_t t) {
  const auto* c = std::get_if<CyclicalAnneal>(&schedule);
  return c != nullptr && t >= c->total_steps;
}

inline double beta_at(const BetaSchedule& schedule, std::int64_t t) {
  return std::visit(
      [t](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, ConstantBeta>) {
          return s.beta;
        } else if constexpr (std::is_same_v<S, SigmoidAnneal>) {
          const double x = -s.effective_slope() * (static_cast<double>(t) - s.midpoint);
          if (x > 700) return 0.0;
          return 1.0 / (1.0 + std::exp(x));
        } else {
          if (t >= s.total_steps) return 1.0;
          const double cycle = static_cast<double>(s.total_steps) / static_cast<double>(s.cycles);
          const double phase = std::fmod(static_cast<double>(std::max<std::int64_t>(t, 0)), cycle) / cycle;
          return phase < s.ramp_fraction ? phase / s.ramp_fraction : 1.0;
        }
      },
      schedule);
}

// Tagged-object form used by experiment configs, e.g.
// {"type":"capacity_step","v0":0.5,"alpha":0.15,"period":5000,"cap":18}.

inline nlohmann::json to_json(const SetpointSchedule& schedule) {
  if (const auto* c = std::get_if<ConstantSetpoint>(&schedule)) return {{"type", "constant"}, {"value", c->value}};
  const auto& s = std::get<CapacityStep>(schedule);
  return {{"type", "capacity_step"}, {"v0", s.v0}, {"alpha", s.alpha}, {"period", s.period}, {"cap", s.cap}};
}

inline nlohmann::json to_json(const BetaSchedule& schedule) {
  if (const auto* c = std::get_if<ConstantBeta>(&schedule)) return {{"type", "constant"}, {"beta", c->beta}};
  if (const auto* s = std::get_if<SigmoidAnneal>(&schedule))
    return {{"type", "sigmoid"}, {"midpoint", s->midpoint}, {"slope", s->effective_slope()}};
  const auto& c = std::get<CyclicalAnneal>(schedule);
  return {{"type", "cyclical"}, {"cycles", c.cycles}, {"total_steps", c.total_steps}, {"ramp_fraction", c.ramp_fraction}};
}

}  // namespace controlvae
