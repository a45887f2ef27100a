#pragma once

// Synthetic stand-in for a training process: observed KL relaxes towards a
// monotone decreasing steady-state response KL_ss(beta) with first-order lag
// and optional Gaussian measurement noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "controlvae/controller.hpp"
#include "controlvae/schedules.hpp"
#include "controlvae/trajectory.hpp"

namespace controlvae {

struct LinearResponse {};

/// Exponential decay from v_at_beta_min to v_at_beta_max; `rate` > 0 sets the
/// curvature.
struct ExponentialResponse {
  double rate = 3.0;
};

using ResponseShape = std::variant<LinearResponse, ExponentialResponse>;

struct PlantParams {
  double v_at_beta_min = 20.0;
  double v_at_beta_max = 1.0;
  double beta_min = 0.0;
  double beta_max = 1.0;
  ResponseShape shape = LinearResponse{};
  double lag = 0.2;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  double initial_kl = 0.0;

  void validate() const {
    if (!(v_at_beta_max >= 0 && v_at_beta_min >= v_at_beta_max) || !std::isfinite(v_at_beta_min))
      throw InputError("plant: need 0 <= v_at_beta_max <= v_at_beta_min");
    if (!std::isfinite(beta_min) || !std::isfinite(beta_max) || beta_min > beta_max)
      throw InputError("plant: need beta_min <= beta_max");
    if (!(lag > 0 && lag <= 1)) throw InputError("plant: lag must lie in (0, 1]");
    if (!std::isfinite(noise_std) || noise_std < 0) throw InputError("plant: noise_std must be >= 0");
    if (!std::isfinite(initial_kl) || initial_kl < 0) throw InputError("plant: initial_kl must be >= 0");
    if (const auto* e = std::get_if<ExponentialResponse>(&shape); e && !(e->rate > 0))
      throw InputError("plant: exponential rate must be > 0");
  }
};

class PlantModel {
 public:
  explicit PlantModel(PlantParams params)
      : params_(std::move(params)), rng_(params_.seed), current_kl_(params_.initial_kl) {
    params_.validate();
  }

  /// Steady-state KL for a given beta (clamped to the plant's beta range).
  double steady_state(double beta) const {
    const double lo = params_.beta_min;
    const double hi = params_.beta_max;
    const double b = std::clamp(beta, lo, hi);
    const double u = hi > lo ? (b - lo) / (hi - lo) : 0.0;
    const double top = params_.v_at_beta_min;
    const double bottom = params_.v_at_beta_max;
    if (const auto* e = std::get_if<ExponentialResponse>(&params_.shape)) {
      const double tail = std::exp(-e->rate);
      return bottom + (top - bottom) * (std::exp(-e->rate * u) - tail) / (1.0 - tail);
    }
    return top + (bottom - top) * u;
  }

  double step(double beta) {
    if (!std::isfinite(beta)) throw InputError("plant: beta must be finite");
    double next = current_kl_ + params_.lag * (steady_state(beta) - current_kl_);
    if (params_.noise_std > 0) next += params_.noise_std * noise_(rng_);
    current_kl_ = std::max(next, 0.0);
    return current_kl_;
  }

  double current_kl() const { return current_kl_; }
  const PlantParams& params() const { return params_; }

 private:
  PlantParams params_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};
  double current_kl_;
};

inline double plant_step(PlantModel& model, double beta) { return model.step(beta); }

/// Alternates controller and plant for `steps` iterations. Record t holds the
/// KL observed by the controller at t and the beta it produced in response.
inline Trajectory run_closed_loop(PlantModel model, const ControllerParams& controller_params,
                                  const SetpointSchedule& schedule, std::int64_t steps) {
  if (steps < 1) throw InputError("plant loop: steps must be >= 1");
  validate(schedule);
  PiController controller(controller_params);
  Trajectory traj;
  traj.seed = model.params().seed;
  traj.records.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t t = 0; t < steps; ++t) {
    const double kl = model.current_kl();
    const double setpoint = setpoint_at(schedule, t);
    const ControllerOutput out = controller.update(setpoint, kl);
    traj.records.push_back(StepRecord{t, out.beta, kl, 0.0, setpoint, 0.0, out.beta_unclamped});
    model.step(out.beta);
  }
  return traj;
}

/// KL trace of the plant under a constant beta.
inline std::vector<double> run_fixed_beta(PlantModel model, double beta, std::int64_t steps) {
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(std::max<std::int64_t>(steps, 0)));
  for (std::int64_t t = 0; t < steps; ++t) trace.push_back(model.step(beta));
  return trace;
}

}  // namespace controlvae
