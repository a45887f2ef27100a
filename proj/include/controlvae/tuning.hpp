#pragma once

// Gain sanity checks and empirical estimation of the feasible set-point range.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "controlvae/controller.hpp"
#include "controlvae/trajectory.hpp"

namespace controlvae {

inline constexpr double kDefaultEpsilon = 1e-3;
inline constexpr double kRecommendedKiLow = 1e-4;
inline constexpr double kRecommendedKiHigh = 1e-3;

struct TuningReport {
  double kp_bound = 0.0;
  bool kp_ok = false;
  bool ki_in_recommended_range = false;
  std::string notes;
};

/// The P term at maximum error (KL near zero) should not exceed epsilon:
/// kp / (1 + exp(setpoint)) <= epsilon, i.e. kp <= (1 + exp(setpoint)) * epsilon.
/// Advisory only.
inline TuningReport check_gains(double kp, double ki, double setpoint, double epsilon = kDefaultEpsilon) {
  if (!(epsilon > 0)) throw InputError("check_gains: epsilon must be > 0");
  if (!(setpoint >= 0)) throw InputError("check_gains: setpoint must be >= 0");
  TuningReport r;
  r.kp_bound = (1.0 + std::exp(setpoint)) * epsilon;
  r.kp_ok = kp <= r.kp_bound;
  r.ki_in_recommended_range = ki >= kRecommendedKiLow && ki <= kRecommendedKiHigh;
  if (!r.kp_ok) r.notes += "kp exceeds bound; beta stays large while KL is near zero. ";
  if (!r.ki_in_recommended_range) r.notes += "ki outside [1e-4, 1e-3]; expect sluggish or oscillating beta.";
  if (r.notes.empty()) r.notes = "ok";
  if (r.notes.back() == ' ') r.notes.pop_back();
  return r;
}

inline nlohmann::json to_json(const TuningReport& r) {
  return {{"kp_bound", r.kp_bound},
          {"kp_ok", r.kp_ok},
          {"ki_in_recommended_range", r.ki_in_recommended_range},
          {"notes", r.notes}};
}

struct SetpointBounds {
  double v_min = 0.0;
  double v_max = 0.0;
};

inline nlohmann::json to_json(const SetpointBounds& b) { return {{"v_min", b.v_min}, {"v_max", b.v_max}}; }

/// Thrown when a fixed-beta run does not settle; carries the offending trace.
class EstimationError : public std::runtime_error {
 public:
  EstimationError(const std::string& what, double beta, std::vector<double> trace)
      : std::runtime_error(what), beta_(beta), trace_(std::move(trace)) {}
  double beta() const { return beta_; }
  const std::vector<double>& trace() const { return trace_; }

 private:
  double beta_;
  std::vector<double> trace_;
};

/// Runs the system with beta held constant and returns the observed KL per step.
using FixedBetaRunner = std::function<std::vector<double>(double beta, std::int64_t steps)>;

struct BoundsOptions {
  /// Relative spread (std / mean) of the final window above which a run counts
  /// as not converged.
  double max_relative_std = 0.05;
  /// Absolute spread always accepted, so a KL that has collapsed to ~0 nats
  /// still counts as settled.
  double max_absolute_std = 1e-3;
};

/// Converged KL over the final 10% of a fixed-beta run.
inline double converged_kl(const FixedBetaRunner& run, double beta, std::int64_t steps,
                           const BoundsOptions& opts) {
  std::vector<double> trace = run(beta, steps);
  if (trace.empty()) throw EstimationError("setpoint bounds: runner returned an empty trace", beta, {});
  const std::size_t w = final_window(trace.size());
  const auto stats = mean_std(std::span<const double>(trace).last(w));
  const double scale = std::abs(stats.mean);
  if (!std::isfinite(stats.mean) || stats.std > std::max(opts.max_relative_std * scale, opts.max_absolute_std)) {
    throw EstimationError("setpoint bounds: KL did not converge at beta=" + format_number(beta) +
                              " (final-window mean " + format_number(stats.mean) + ", std " +
                              format_number(stats.std) + ")",
                          beta, std::move(trace));
  }
  return stats.mean;
}

/// v_max is the converged KL at beta_min, v_min the converged KL at beta_max.
inline SetpointBounds estimate_setpoint_bounds(const FixedBetaRunner& run, const ControllerParams& params,
                                               std::int64_t steps, const BoundsOptions& opts = {}) {
  params.validate();
  if (steps < 1) throw InputError("setpoint bounds: steps must be >= 1");
  SetpointBounds b;
  b.v_max = converged_kl(run, params.beta_min, steps, opts);
  b.v_min = params.beta_max == params.beta_min ? b.v_max : converged_kl(run, params.beta_max, steps, opts);
  return b;
}

}  // namespace controlvae
