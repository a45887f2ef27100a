#pragma once

// Closed training loop: sample a batch, run the forward pass, read the batch
// KL, pick beta (from the controller or an open-loop schedule), back-propagate
// with that beta, apply Adam, log the step.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "controlvae/controller.hpp"
#include "controlvae/dataset.hpp"
#include "controlvae/schedules.hpp"
#include "controlvae/trajectory.hpp"
#include "controlvae/vae.hpp"

namespace controlvae {

struct TrainConfig {
  Objective objective = Objective::Controlled;
  /// Used when objective == Controlled.
  ControllerParams controller;
  /// KL target for Controlled, capacity C for Capacity.
  SetpointSchedule setpoint_schedule = ConstantSetpoint{2.0};
  /// Used when objective == BetaFixed.
  BetaSchedule beta_schedule = ConstantBeta{1.0};
  /// Fixed beta of the Capacity objective.
  double capacity_beta = 100.0;
  VaeDims dims;
  std::int64_t steps = 6000;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::int64_t log_every = 1;

  void validate() const {
    if (objective == Objective::Controlled) controller.validate();
    validate_schedule(setpoint_schedule);
    validate_schedule(beta_schedule);
    if (objective == Objective::BetaFixed) {
      // Positivity only matters for the constant form; annealing starts near 0.
      if (const auto* c = std::get_if<ConstantBeta>(&beta_schedule); c && !(c->beta > 0))
        throw InputError("train: constant beta must be > 0");
    }
    if (!std::isfinite(capacity_beta) || capacity_beta <= 0) throw InputError("train: capacity_beta must be > 0");
    if (dims.input != SpriteDataset::kPixels) throw InputError("train: input_dim must be 64 for the sprite set");
    if (dims.hidden < 1 || dims.latent < 1) throw InputError("train: hidden/latent dims must be positive");
    if (steps < 0) throw InputError("train: steps must be >= 0");
    if (batch_size < 1) throw InputError("train: batch_size must be >= 1");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw InputError("train: learning_rate must be > 0");
    if (log_every < 1) throw InputError("train: log_every must be >= 1");
  }

 private:
  static void validate_schedule(const SetpointSchedule& s) { controlvae::validate(s); }
  static void validate_schedule(const BetaSchedule& s) { controlvae::validate(s); }
};

inline nlohmann::json to_json(const ControllerParams& p) {
  nlohmann::json j{{"kp", p.kp},
                   {"ki", p.ki},
                   {"beta_min", p.beta_min},
                   {"beta_max", p.beta_max},
                   {"sampling_period", p.sampling_period}};
  if (p.kl_ema) j["kl_ema"] = *p.kl_ema;
  return j;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"objective", to_string(c.objective)},
          {"controller", to_json(c.controller)},
          {"setpoint_schedule", to_json(c.setpoint_schedule)},
          {"beta_schedule", to_json(c.beta_schedule)},
          {"capacity_beta", c.capacity_beta},
          {"input_dim", c.dims.input},
          {"hidden_dim", c.dims.hidden},
          {"latent_dim", c.dims.latent},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"seed", c.seed},
          {"log_every", c.log_every}};
}

/// FNV-1a over the canonical (sorted-key) JSON dump, as 16 hex digits.
inline std::string hash_json(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const TrainConfig& c) { return hash_json(to_json(c)); }

/// Non-finite loss during training. Carries the steps completed so far.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::int64_t step, Trajectory partial)
      : std::runtime_error(what), step_(step), partial_(std::move(partial)) {}
  std::int64_t step() const { return step_; }
  const Trajectory& partial() const { return partial_; }

 private:
  std::int64_t step_;
  Trajectory partial_;
};

struct TrainResult {
  Trajectory trajectory;
  VaeModel model;
  std::optional<ControllerState> controller_state;
};

using ProgressFn = std::function<void(const StepRecord&)>;

inline TrainResult run_training(const TrainConfig& config, const ProgressFn& progress = {}) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  const SpriteDataset data;
  TrainResult result{{}, VaeModel::init(config.dims, config.seed), std::nullopt};
  Trajectory& traj = result.trajectory;
  traj.config_hash = config_hash(config);
  traj.seed = config.seed;
  traj.records.reserve(static_cast<std::size_t>(config.steps));

  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamMoments moments = AdamMoments::zeros(config.dims);
  const AdamConfig adam{config.learning_rate};
  std::optional<PiController> controller;
  if (config.objective == Objective::Controlled) controller.emplace(config.controller);

  for (std::int64_t t = 0; t < config.steps; ++t) {
    const Batch batch = data.sample(rng, config.batch_size, config.dims.latent);
    const ForwardPass pass = forward(result.model, batch);
    const double setpoint = setpoint_at(config.setpoint_schedule, t);
    if (!std::isfinite(pass.kl) || !std::isfinite(pass.recon)) {
      traj.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      throw TrainingError("train: non-finite loss at step " + std::to_string(t), t, std::move(traj));
    }

    double beta = 1.0;
    double beta_unclamped = 1.0;
    switch (config.objective) {
      case Objective::Elbo: break;
      case Objective::BetaFixed: beta = beta_unclamped = beta_at(config.beta_schedule, t); break;
      case Objective::Capacity: beta = beta_unclamped = config.capacity_beta; break;
      case Objective::Controlled: {
        const ControllerOutput out = controller->update(setpoint, pass.kl);
        beta = out.beta;
        beta_unclamped = out.beta_unclamped;
        break;
      }
    }

    const LossTerms terms = loss_terms(pass, config.objective, beta, setpoint);
    if (!std::isfinite(terms.total)) {
      traj.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      throw TrainingError("train: non-finite loss at step " + std::to_string(t), t, std::move(traj));
    }
    const VaeParams grads = backward(result.model, batch, pass, config.objective, beta, setpoint);
    adam_step(result.model.params, grads, moments, t + 1, adam);

    traj.records.push_back(StepRecord{t, beta, terms.kl, terms.recon, setpoint, terms.total, beta_unclamped});
    if (progress) progress(traj.records.back());
  }
  if (controller) result.controller_state = controller->state();
  traj.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

inline Trajectory train(const TrainConfig& config) { return run_training(config).trajectory; }

/// KL trace of a training run with beta held constant: the controlled
/// objective with its output range collapsed to {beta}.
inline std::vector<double> train_fixed_beta(TrainConfig config, double beta, std::int64_t steps) {
  config.objective = Objective::Controlled;
  config.controller.beta_min = config.controller.beta_max = beta;
  config.steps = steps;
  const Trajectory traj = train(config);
  std::vector<double> kl;
  kl.reserve(traj.records.size());
  for (const auto& r : traj.records) kl.push_back(r.observed_kl);
  return kl;
}

/// Controller constants for the application styles. "sprite" widens the beta
/// range for the toy sprite task, whose KL at beta = 1 sits near 5 nats.
struct Preset {
  ControllerParams controller;
  std::optional<SetpointSchedule> setpoint_schedule;
};

inline std::optional<Preset> find_preset(std::string_view name) {
  if (name == "language" || name == "image") return Preset{ControllerParams{0.01, 1e-4, 0.0, 1.0, 1, std::nullopt}, std::nullopt};
  if (name == "disentangle")
    return Preset{ControllerParams{0.01, 1e-3, 1.0, 100.0, 1, std::nullopt}, SetpointSchedule{CapacityStep{0.5, 0.15, 5000, 18.0}}};
  if (name == "sprite") return Preset{ControllerParams{0.01, 1e-3, 0.0, 10.0, 1, std::nullopt}, std::nullopt};
  return std::nullopt;
}

}  // namespace controlvae
