#pragma once

// Nonlinear PI controller that drives the KL weight of a VAE objective so the
// observed KL-divergence tracks a set point.
//
//   beta(t) = kp / (1 + exp(e(t))) - ki * sum_j e(j) + beta_min,   e = v_kl - kl
//
// The integral only accumulates while the previous pre-clamp output was inside
// [beta_min, beta_max] (anti-windup), and the applied output is clamped to that
// range.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <json.hpp>

namespace controlvae {

/// Raised for inputs a controller or model cannot consume (non-finite KL,
/// negative set point, invalid gains).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ControllerParams {
  double kp = 0.01;
  double ki = 1e-4;
  double beta_min = 0.0;
  double beta_max = 1.0;
  /// Controller is sampled every `sampling_period` trainer steps.
  std::int64_t sampling_period = 1;
  /// Optional exponential moving average on the observed KL; weight of the
  /// newest sample. Disabled when empty.
  std::optional<double> kl_ema;

  /// Throws InputError on violated invariants. beta_min == beta_max is allowed
  /// and pins the output to a constant.
  void validate() const {
    if (!std::isfinite(kp) || kp < 0) throw InputError("controller: kp must be finite and >= 0");
    if (!std::isfinite(ki) || ki < 0) throw InputError("controller: ki must be finite and >= 0");
    if (!std::isfinite(beta_min) || !std::isfinite(beta_max))
      throw InputError("controller: beta_min/beta_max must be finite");
    if (beta_min > beta_max) throw InputError("controller: beta_min must not exceed beta_max");
    if (sampling_period < 1) throw InputError("controller: sampling_period must be >= 1");
    if (kl_ema && !(*kl_ema > 0.0 && *kl_ema <= 1.0))
      throw InputError("controller: kl_ema must lie in (0, 1]");
  }
};

struct ControllerState {
  double integral = 0.0;
  double last_output_unclamped = 0.0;
  std::uint64_t step_count = 0;

  friend bool operator==(const ControllerState&, const ControllerState&) = default;
};

struct ControllerOutput {
  double beta = 0.0;
  double beta_unclamped = 0.0;
  double p_term = 0.0;
  double i_term = 0.0;
  double error = 0.0;
};

/// kp / (1 + exp(error)), saturated to kp below -500 and to 0 above 500.
inline double p_term(double error, double kp) {
  if (error < -500.0) return kp;
  if (error > 500.0) return 0.0;
  return kp / (1.0 + std::exp(error));
}

/// One step of the PI law. Pure: returns the output and the successor state.
inline std::pair<ControllerOutput, ControllerState> pi_step(const ControllerState& state,
                                                            const ControllerParams& params,
                                                            double setpoint, double observed_kl) {
  if (!std::isfinite(observed_kl) || observed_kl < 0.0)
    throw InputError("controller: observed KL must be finite and >= 0, got " +
                     std::to_string(observed_kl));
  if (!std::isfinite(setpoint) || setpoint < 0.0)
    throw InputError("controller: set point must be finite and >= 0");

  ControllerOutput out;
  out.error = setpoint - observed_kl;
  out.p_term = p_term(out.error, params.kp);

  // The first step has no meaningful previous output; always integrate.
  const bool first = state.step_count == 0;
  const bool in_range = params.beta_min <= state.last_output_unclamped &&
                        state.last_output_unclamped <= params.beta_max;
  double integral = state.integral;
  if (first || in_range) integral -= params.ki * out.error;
  out.i_term = integral;

  out.beta_unclamped = out.p_term + integral + params.beta_min;
  out.beta = std::clamp(out.beta_unclamped, params.beta_min, params.beta_max);

  ControllerState next{integral, out.beta_unclamped, state.step_count + 1};
  return {out, next};
}

inline ControllerState reset(const ControllerState& /*state*/) { return ControllerState{}; }

/// Stateful wrapper used by training loops: applies the sampling period and the
/// optional KL smoothing, and holds the last output between samples.
class PiController {
 public:
  explicit PiController(ControllerParams params, ControllerState state = {})
      : params_(std::move(params)), state_(state) {
    params_.validate();
    held_.beta = std::clamp(0.0, params_.beta_min, params_.beta_max);
  }

  /// Called once per trainer step. `observed_kl` is the raw batch KL.
  ControllerOutput update(double setpoint, double observed_kl) {
    if (!std::isfinite(observed_kl) || observed_kl < 0.0)
      throw InputError("controller: observed KL must be finite and >= 0, got " +
                       std::to_string(observed_kl));
    double kl = observed_kl;
    if (params_.kl_ema) {
      smoothed_ = smoothed_ ? *params_.kl_ema * observed_kl + (1.0 - *params_.kl_ema) * *smoothed_
                            : observed_kl;
      kl = *smoothed_;
    }
    if (ticks_ % params_.sampling_period == 0) {
      auto [out, next] = pi_step(state_, params_, setpoint, kl);
      held_ = out;
      state_ = next;
    }
    ++ticks_;
    return held_;
  }

  void reset() {
    state_ = controlvae::reset(state_);
    smoothed_.reset();
    ticks_ = 0;
    held_ = ControllerOutput{};
    held_.beta = std::clamp(0.0, params_.beta_min, params_.beta_max);
  }

  const ControllerParams& params() const { return params_; }
  const ControllerState& state() const { return state_; }

 private:
  ControllerParams params_;
  ControllerState state_;
  ControllerOutput held_;
  std::optional<double> smoothed_;
  std::int64_t ticks_ = 0;
};

// Checkpoint format: {kp, ki, beta_min, beta_max, integral, last_output_unclamped, step_count}.
// nlohmann/json prints doubles in shortest round-trip form, so finite values
// survive a dump/parse cycle bit-exactly.
inline nlohmann::json controller_to_json(const ControllerParams& params,
                                         const ControllerState& state) {
  return nlohmann::json{{"kp", params.kp},
                        {"ki", params.ki},
                        {"beta_min", params.beta_min},
                        {"beta_max", params.beta_max},
                        {"integral", state.integral},
                        {"last_output_unclamped", state.last_output_unclamped},
                        {"step_count", state.step_count}};
}

inline std::pair<ControllerParams, ControllerState> controller_from_json(const nlohmann::json& j) {
  static constexpr const char* kKeys[] = {"kp",       "ki",       "beta_min",
                                          "beta_max", "integral", "last_output_unclamped",
                                          "step_count"};
  if (!j.is_object()) throw InputError("controller checkpoint: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys))
      throw InputError("controller checkpoint: unknown key '" + key + "'");
  }
  auto number = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_number())
      throw InputError(std::string("controller checkpoint: missing numeric field '") + key + "'");
    return j.at(key).get<double>();
  };
  ControllerParams params;
  params.kp = number("kp");
  params.ki = number("ki");
  params.beta_min = number("beta_min");
  params.beta_max = number("beta_max");
  params.validate();
  ControllerState state;
  state.integral = number("integral");
  state.last_output_unclamped = number("last_output_unclamped");
  if (!j.contains("step_count") || !j.at("step_count").is_number_unsigned())
    throw InputError("controller checkpoint: 'step_count' must be a non-negative integer");
  state.step_count = j.at("step_count").get<std::uint64_t>();
  return {params, state};
}

}  // namespace controlvae
