#pragma once

// Command-line front end: runs one experiment from a JSON config and writes
// <prefix>.csv and <prefix>.summary.json for external plotting.
//
// Exit status: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "controlvae/config.hpp"
#include "controlvae/controller.hpp"
#include "controlvae/plant.hpp"
#include "controlvae/trainer.hpp"
#include "controlvae/trajectory.hpp"
#include "controlvae/tuning.hpp"

namespace controlvae {

inline constexpr const char* kVersion = "0.1.0";

inline constexpr const char* kControllerTraceCsvHeader = "t,setpoint,kl,error,p_term,i_term,beta_unclamped,beta";

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  bool quiet = false;
};

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::out) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  return os;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  auto os = open_output(path);
  os << j.dump(2) << "\n";
}

inline std::string lossless(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void apply_overrides(ExperimentConfig& cfg, const RunOverrides& o) {
  switch (cfg.kind) {
    case ExperimentKind::PlantLoop:
      if (o.seed) cfg.plant_loop.plant.seed = *o.seed;
      if (o.steps) {
        if (*o.steps < 1) throw ConfigError("--steps: plant_loop needs at least one step");
        cfg.plant_loop.steps = *o.steps;
      }
      break;
    case ExperimentKind::VaeTrain:
      if (o.seed) cfg.vae_train.train.seed = *o.seed;
      if (o.steps) {
        if (*o.steps < 0) throw ConfigError("--steps: must be >= 0");
        cfg.vae_train.train.steps = *o.steps;
      }
      break;
    case ExperimentKind::SetpointBounds:
      if (o.seed) {
        cfg.bounds.plant.seed = *o.seed;
        cfg.bounds.train.seed = *o.seed;
      }
      if (o.steps) {
        if (*o.steps < 1) throw ConfigError("--steps: setpoint_bounds needs at least one step");
        cfg.bounds.steps = *o.steps;
      }
      break;
    case ExperimentKind::ControllerTrace:
    case ExperimentKind::GainCheck: break;
  }
}

inline std::string run_id_for(const std::string& prefix) {
  const std::string stem = std::filesystem::path(prefix).filename().string();
  return stem.empty() ? prefix : stem;
}

}  // namespace detail

/// Runs the experiment described by `config_path`. Diagnostics and progress go
/// to `log`.
inline int run_experiment(const std::string& config_path, const RunOverrides& overrides, std::ostream& log) {
  ExperimentConfig cfg;
  nlohmann::json identity;
  try {
    const std::string text = detail::read_file(config_path);
    cfg = parse_experiment_text(text);
    detail::apply_overrides(cfg, overrides);
    identity = text.find_first_not_of(" \t\r\n") == std::string::npos ? nlohmann::json::object()
                                                                       : nlohmann::json::parse(text);
    if (overrides.seed) identity["--seed"] = *overrides.seed;
    if (overrides.steps) identity["--steps"] = *overrides.steps;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << "\n";
    return 1;
  }

  const std::string prefix = cfg.output;
  const std::string csv_path = prefix + ".csv";
  const std::string summary_path = prefix + ".summary.json";
  const std::string run_id = detail::run_id_for(prefix);
  const std::string hash = hash_json(identity);

  auto base_summary = [&](const Trajectory& traj) {
    auto j = summary_to_json(summarize(traj, run_id));
    j["config_hash"] = hash;
    return j;
  };

  try {
    switch (cfg.kind) {
      case ExperimentKind::GainCheck: {
        const auto& g = cfg.gain_check;
        auto j = to_json(check_gains(g.kp, g.ki, g.setpoint, g.epsilon));
        j["run_id"] = run_id;
        j["config_hash"] = hash;
        detail::write_json(summary_path, j);
        if (!overrides.quiet) log << "kp_bound=" << format_number(j["kp_bound"].get<double>())
                                  << " kp_ok=" << (j["kp_ok"].get<bool>() ? "true" : "false") << "\n";
        break;
      }

      case ExperimentKind::ControllerTrace: {
        const auto& s = cfg.controller_trace;
        ControllerState state = s.initial_state.value_or(ControllerState{});
        Trajectory traj;
        traj.config_hash = hash;
        auto os = detail::open_output(csv_path);
        os << kControllerTraceCsvHeader << "\r\n";
        for (std::size_t i = 0; i < s.observed_kl.size(); ++i) {
          const auto t = static_cast<std::int64_t>(i);
          const double setpoint = setpoint_at(s.setpoint_schedule, t);
          auto [out, next] = pi_step(state, s.controller, setpoint, s.observed_kl[i]);
          state = next;
          os << t << ',' << detail::lossless(setpoint) << ',' << detail::lossless(s.observed_kl[i]) << ','
             << detail::lossless(out.error) << ',' << detail::lossless(out.p_term) << ','
             << detail::lossless(out.i_term) << ',' << detail::lossless(out.beta_unclamped) << ','
             << detail::lossless(out.beta) << "\r\n";
          traj.records.push_back(StepRecord{t, out.beta, s.observed_kl[i], 0.0, setpoint, 0.0, out.beta_unclamped});
        }
        auto j = base_summary(traj);
        j["checkpoint"] = controller_to_json(s.controller, state);
        detail::write_json(summary_path, j);
        break;
      }

      case ExperimentKind::PlantLoop: {
        const auto& s = cfg.plant_loop;
        Trajectory traj = run_closed_loop(PlantModel(s.plant), s.controller, s.setpoint_schedule, s.steps);
        traj.config_hash = hash;
        auto os = detail::open_output(csv_path);
        write_trajectory_csv(os, traj, s.log_every);
        detail::write_json(summary_path, base_summary(traj));
        if (!overrides.quiet) {
          const auto row = summarize(traj, run_id);
          print_summary_table(log, std::span<const RunSummary>(&row, 1));
        }
        break;
      }

      case ExperimentKind::VaeTrain: {
        const auto& s = cfg.vae_train;
        const std::int64_t every = std::max<std::int64_t>(1, s.train.steps / 10);
        ProgressFn progress;
        if (!overrides.quiet) {
          progress = [&](const StepRecord& r) {
            if (r.t % every == 0 || r.t + 1 == s.train.steps)
              log << "step " << r.t << "/" << s.train.steps << " kl=" << format_number(r.observed_kl)
                  << " recon=" << format_number(r.recon_loss) << " beta=" << format_number(r.beta) << "\n";
          };
        }
        TrainResult result;
        try {
          result = run_training(s.train, progress);
        } catch (const TrainingError& e) {
          Trajectory partial = e.partial();
          partial.config_hash = hash;
          auto os = detail::open_output(csv_path);
          write_trajectory_csv(os, partial, s.train.log_every);
          auto j = base_summary(partial);
          j["error"] = e.what();
          j["failed_step"] = e.step();
          detail::write_json(summary_path, j);
          log << "runtime error: " << e.what() << "\n";
          return 2;
        }
        result.trajectory.config_hash = hash;
        auto os = detail::open_output(csv_path);
        write_trajectory_csv(os, result.trajectory, s.train.log_every);
        auto j = base_summary(result.trajectory);
        if (result.controller_state) j["controller_checkpoint"] = controller_to_json(s.train.controller, *result.controller_state);
        detail::write_json(summary_path, j);
        if (s.checkpoint) {
          auto ck = detail::open_output(prefix + ".klp", std::ios::out | std::ios::binary);
          save_checkpoint(ck, result.model);
        }
        if (!overrides.quiet) {
          const auto row = summarize(result.trajectory, run_id);
          print_summary_table(log, std::span<const RunSummary>(&row, 1));
        }
        break;
      }

      case ExperimentKind::SetpointBounds: {
        const auto& s = cfg.bounds;
        FixedBetaRunner runner;
        if (s.use_plant) {
          runner = [&](double beta, std::int64_t steps) { return run_fixed_beta(PlantModel(s.plant), beta, steps); };
        } else {
          runner = [&](double beta, std::int64_t steps) { return train_fixed_beta(s.train, beta, steps); };
        }
        nlohmann::json j{{"run_id", run_id}, {"config_hash", hash}};
        try {
          const SetpointBounds b = estimate_setpoint_bounds(runner, s.controller, s.steps, s.options);
          j.update(to_json(b));
        } catch (const EstimationError& e) {
          j["error"] = e.what();
          j["beta"] = e.beta();
          j["trace"] = e.trace();
          detail::write_json(summary_path, j);
          log << "runtime error: " << e.what() << "\n";
          return 2;
        }
        detail::write_json(summary_path, j);
        if (!overrides.quiet) log << "v_min=" << format_number(j["v_min"].get<double>())
                                  << " v_max=" << format_number(j["v_max"].get<double>()) << "\n";
        break;
      }
    }
  } catch (const InputError& e) {
    log << "runtime error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    log << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

/// Entry point shared by the executable and the tests.
inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Feedback control of the KL term in VAE training", "controlvae"};
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  bool quiet = false;
  app.add_option("--config", config_path, "Experiment configuration (JSON)")->required();
  app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--steps", steps, "Override the configured number of steps");
  app.add_flag("--quiet", quiet, "Suppress progress lines");
  app.set_version_flag("--version", std::string("controlvae ") + kVersion);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "controlvae " << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }
  return run_experiment(config_path, RunOverrides{seed, steps, quiet}, err);
}

}  // namespace controlvae
