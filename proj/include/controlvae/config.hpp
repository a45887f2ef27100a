#pragma once

// Strict JSON experiment configuration. Unknown keys, wrong types and violated
// invariants are reported with the dotted path of the offending field.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "controlvae/controller.hpp"
#include "controlvae/plant.hpp"
#include "controlvae/schedules.hpp"
#include "controlvae/trainer.hpp"
#include "controlvae/tuning.hpp"

namespace controlvae {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

/// Tracks which keys of a JSON object were consumed; finish() rejects the rest.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected a JSON object");
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where(key) + ": missing required field");
    return j_.at(key);
  }

  double number(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) { return has(key) ? number(key) : mark(key, fallback); }

  std::int64_t integer(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(where(key) + ": expected an integer");
    return v.get<std::int64_t>();
  }
  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    return has(key) ? integer(key) : mark(key, fallback);
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) {
    if (!has(key)) return mark(key, fallback);
    const auto& v = raw(key);
    if (!v.is_number_unsigned()) throw ConfigError(where(key) + ": expected a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return mark(key, fallback);
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key) {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    return has(key) ? string(key) : mark(key, fallback);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError(where(key) + ": unknown key");
  }

 private:
  template <class T>
  T mark(const std::string& key, T value) {
    seen_.insert(key);
    return value;
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

/// Runs `fn` and rewrites InputError into a ConfigError located at `path`.
template <class Fn>
void check(const std::string& path, Fn&& fn) {
  try {
    fn();
  } catch (const InputError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace detail

inline SetpointSchedule parse_setpoint_schedule(const nlohmann::json& j, const std::string& path) {
  detail::Fields f(j, path);
  const std::string type = f.string("type");
  SetpointSchedule out;
  if (type == "constant") {
    out = ConstantSetpoint{f.number("value")};
  } else if (type == "capacity_step") {
    out = CapacityStep{f.number("v0"), f.number("alpha"), f.integer("period"), f.number("cap")};
  } else {
    throw ConfigError(f.where("type") + ": unknown set-point schedule '" + type +
                      "' (expected constant or capacity_step)");
  }
  f.finish();
  detail::check(path, [&] { validate(out); });
  return out;
}

inline BetaSchedule parse_beta_schedule(const nlohmann::json& j, const std::string& path) {
  detail::Fields f(j, path);
  const std::string type = f.string("type");
  BetaSchedule out;
  if (type == "constant") {
    out = ConstantBeta{f.number("beta")};
  } else if (type == "sigmoid") {
    out = SigmoidAnneal{f.number("midpoint"), f.number("slope", 0.0)};
  } else if (type == "cyclical") {
    out = CyclicalAnneal{f.integer("cycles"), f.integer("total_steps"), f.number("ramp_fraction", 0.5)};
  } else {
    throw ConfigError(f.where("type") + ": unknown beta schedule '" + type +
                      "' (expected constant, sigmoid or cyclical)");
  }
  f.finish();
  detail::check(path, [&] { validate(out); });
  return out;
}

/// {"preset": name} seeds the constants; explicit keys override them.
inline ControllerParams parse_controller(const nlohmann::json& j, const std::string& path) {
  detail::Fields f(j, path);
  ControllerParams p;
  if (f.has("preset")) {
    const std::string name = f.string("preset");
    const auto preset = find_preset(name);
    if (!preset) throw ConfigError(f.where("preset") + ": unknown preset '" + name + "'");
    p = preset->controller;
  }
  p.kp = f.number("kp", p.kp);
  p.ki = f.number("ki", p.ki);
  p.beta_min = f.number("beta_min", p.beta_min);
  p.beta_max = f.number("beta_max", p.beta_max);
  p.sampling_period = f.integer("sampling_period", p.sampling_period);
  if (f.has("kl_ema")) p.kl_ema = f.number("kl_ema");
  f.finish();
  detail::check(path, [&] { p.validate(); });
  return p;
}

inline PlantParams parse_plant(const nlohmann::json& j, const std::string& path) {
  detail::Fields f(j, path);
  PlantParams p;
  p.v_at_beta_min = f.number("v_at_beta_min", p.v_at_beta_min);
  p.v_at_beta_max = f.number("v_at_beta_max", p.v_at_beta_max);
  p.beta_min = f.number("beta_min", p.beta_min);
  p.beta_max = f.number("beta_max", p.beta_max);
  const std::string shape = f.string("shape", "linear");
  if (shape == "linear") {
    p.shape = LinearResponse{};
  } else if (shape == "exponential") {
    p.shape = ExponentialResponse{f.number("rate", 3.0)};
  } else {
    throw ConfigError(f.where("shape") + ": unknown response shape '" + shape + "' (expected linear or exponential)");
  }
  p.lag = f.number("lag", p.lag);
  p.noise_std = f.number("noise_std", p.noise_std);
  p.seed = f.seed("seed", p.seed);
  p.initial_kl = f.number("initial_kl", p.initial_kl);
  f.finish();
  detail::check(path, [&] { p.validate(); });
  return p;
}

inline Objective parse_objective(const std::string& name, const std::string& path) {
  if (name == "elbo") return Objective::Elbo;
  if (name == "beta_fixed") return Objective::BetaFixed;
  if (name == "capacity") return Objective::Capacity;
  if (name == "controlled") return Objective::Controlled;
  throw ConfigError(path + ": unknown objective '" + name + "' (expected elbo, beta_fixed, capacity or controlled)");
}

inline TrainConfig parse_train(const nlohmann::json& j, const std::string& path) {
  detail::Fields f(j, path);
  TrainConfig c;
  c.objective = parse_objective(f.string("objective"), f.where("objective"));
  std::optional<Preset> preset;
  if (f.has("controller")) {
    const auto& cj = f.raw("controller");
    c.controller = parse_controller(cj, f.where("controller"));
    if (cj.is_object() && cj.contains("preset")) preset = find_preset(cj.at("preset").get<std::string>());
  }
  if (f.has("setpoint_schedule")) {
    c.setpoint_schedule = parse_setpoint_schedule(f.raw("setpoint_schedule"), f.where("setpoint_schedule"));
  } else if (preset && preset->setpoint_schedule) {
    c.setpoint_schedule = *preset->setpoint_schedule;
  } else if (c.objective == Objective::Controlled || c.objective == Objective::Capacity) {
    throw ConfigError(f.where("setpoint_schedule") + ": missing required field for objective '" +
                      to_string(c.objective) + "'");
  }
  if (f.has("beta_schedule")) {
    c.beta_schedule = parse_beta_schedule(f.raw("beta_schedule"), f.where("beta_schedule"));
  } else if (c.objective == Objective::BetaFixed) {
    throw ConfigError(f.where("beta_schedule") + ": missing required field for objective 'beta_fixed'");
  }
  c.capacity_beta = f.number("capacity_beta", c.capacity_beta);
  c.dims.input = static_cast<int>(f.integer("input_dim", c.dims.input));
  c.dims.hidden = static_cast<int>(f.integer("hidden_dim", c.dims.hidden));
  c.dims.latent = static_cast<int>(f.integer("latent_dim", c.dims.latent));
  c.steps = f.integer("steps", c.steps);
  c.batch_size = static_cast<int>(f.integer("batch_size", c.batch_size));
  c.learning_rate = f.number("learning_rate", c.learning_rate);
  c.seed = f.seed("seed", c.seed);
  c.log_every = f.integer("log_every", c.log_every);
  f.finish();
  detail::check(path, [&] { c.validate(); });
  return c;
}

enum class ExperimentKind { ControllerTrace, PlantLoop, VaeTrain, SetpointBounds, GainCheck };

struct ControllerTraceSettings {
  ControllerParams controller;
  std::optional<ControllerState> initial_state;
  SetpointSchedule setpoint_schedule = ConstantSetpoint{0.0};
  std::vector<double> observed_kl;
};

struct PlantLoopSettings {
  PlantParams plant;
  ControllerParams controller;
  SetpointSchedule setpoint_schedule = ConstantSetpoint{0.0};
  std::int64_t steps = 1;
  std::int64_t log_every = 1;
};

struct VaeTrainSettings {
  TrainConfig train;
  bool checkpoint = false;
};

struct BoundsSettings {
  bool use_plant = true;
  PlantParams plant;
  TrainConfig train;
  ControllerParams controller;
  std::int64_t steps = 1;
  BoundsOptions options;
};

struct GainCheckSettings {
  double kp = 0.0;
  double ki = 0.0;
  double setpoint = 0.0;
  double epsilon = kDefaultEpsilon;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::GainCheck;
  std::string output;
  ControllerTraceSettings controller_trace;
  PlantLoopSettings plant_loop;
  VaeTrainSettings vae_train;
  BoundsSettings bounds;
  GainCheckSettings gain_check;
};

inline ExperimentConfig parse_experiment(const nlohmann::json& j) {
  detail::Fields f(j, "");
  ExperimentConfig cfg;
  if (!f.has("experiment")) throw ConfigError("experiment: missing required field");
  const std::string kind = f.string("experiment");
  cfg.output = f.string("output", kind);
  if (cfg.output.empty()) throw ConfigError("output: must not be empty");

  if (kind == "controller_trace") {
    cfg.kind = ExperimentKind::ControllerTrace;
    auto& s = cfg.controller_trace;
    s.controller = parse_controller(f.raw("controller"), "controller");
    s.setpoint_schedule = parse_setpoint_schedule(f.raw("setpoint_schedule"), "setpoint_schedule");
    const auto& kl = f.raw("observed_kl");
    if (!kl.is_array()) throw ConfigError("observed_kl: expected an array of numbers");
    for (std::size_t i = 0; i < kl.size(); ++i) {
      if (!kl[i].is_number()) throw ConfigError("observed_kl[" + std::to_string(i) + "]: expected a number");
      if (kl[i].get<double>() < 0)
        throw ConfigError("observed_kl[" + std::to_string(i) + "]: KL must be >= 0");
      s.observed_kl.push_back(kl[i].get<double>());
    }
    if (f.has("initial_state")) {
      const auto& st = f.raw("initial_state");
      try {
        auto [params, state] = controller_from_json(st);
        s.initial_state = state;
      } catch (const InputError& e) {
        throw ConfigError(std::string("initial_state: ") + e.what());
      }
    }
  } else if (kind == "plant_loop") {
    cfg.kind = ExperimentKind::PlantLoop;
    auto& s = cfg.plant_loop;
    s.plant = parse_plant(f.raw("plant"), "plant");
    s.controller = parse_controller(f.raw("controller"), "controller");
    s.setpoint_schedule = parse_setpoint_schedule(f.raw("setpoint_schedule"), "setpoint_schedule");
    s.steps = f.integer("steps");
    if (s.steps < 1) throw ConfigError("steps: must be >= 1");
    s.log_every = f.integer("log_every", 1);
    if (s.log_every < 1) throw ConfigError("log_every: must be >= 1");
  } else if (kind == "vae_train") {
    cfg.kind = ExperimentKind::VaeTrain;
    cfg.vae_train.train = parse_train(f.raw("train"), "train");
    cfg.vae_train.checkpoint = f.boolean("checkpoint", false);
  } else if (kind == "setpoint_bounds") {
    cfg.kind = ExperimentKind::SetpointBounds;
    auto& s = cfg.bounds;
    const std::string runner = f.string("runner");
    if (runner == "plant") {
      s.use_plant = true;
      s.plant = parse_plant(f.raw("plant"), "plant");
    } else if (runner == "vae") {
      s.use_plant = false;
      s.train = parse_train(f.raw("train"), "train");
    } else {
      throw ConfigError("runner: unknown runner '" + runner + "' (expected plant or vae)");
    }
    s.controller = parse_controller(f.raw("controller"), "controller");
    s.steps = f.integer("steps");
    if (s.steps < 1) throw ConfigError("steps: must be >= 1");
    s.options.max_relative_std = f.number("max_relative_std", s.options.max_relative_std);
    if (!(s.options.max_relative_std > 0)) throw ConfigError("max_relative_std: must be > 0");
    s.options.max_absolute_std = f.number("max_absolute_std", s.options.max_absolute_std);
    if (!(s.options.max_absolute_std >= 0)) throw ConfigError("max_absolute_std: must be >= 0");
  } else if (kind == "gain_check") {
    cfg.kind = ExperimentKind::GainCheck;
    auto& s = cfg.gain_check;
    s.kp = f.number("kp");
    s.ki = f.number("ki");
    s.setpoint = f.number("setpoint");
    s.epsilon = f.number("epsilon", kDefaultEpsilon);
    if (!(s.epsilon > 0)) throw ConfigError("epsilon: must be > 0");
    if (!(s.setpoint >= 0)) throw ConfigError("setpoint: must be >= 0");
  } else {
    throw ConfigError("experiment: unknown kind '" + kind +
                      "' (expected controller_trace, plant_loop, vae_train, setpoint_bounds or gain_check)");
  }
  f.finish();
  return cfg;
}

/// Parses configuration text. Empty input is treated as an empty object so the
/// diagnostic names the missing field. Syntax errors report line and column.
inline ExperimentConfig parse_experiment_text(const std::string& text) {
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return parse_experiment(nlohmann::json::object());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("malformed JSON at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                      e.what());
  }
  return parse_experiment(j);
}

}  // namespace controlvae
