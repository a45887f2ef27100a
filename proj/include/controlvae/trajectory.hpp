#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace controlvae {

struct StepRecord {
  std::int64_t t = 0;
  double beta = 0.0;
  double observed_kl = 0.0;
  double recon_loss = 0.0;
  double setpoint = 0.0;
  double total_loss = 0.0;
  /// Pre-clamp controller output; equals beta for open-loop runs. Not part of
  /// the CSV.
  double beta_unclamped = 0.0;
};

struct Trajectory {
  std::vector<StepRecord> records;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

/// "%.9g"
inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline constexpr const char* kTrajectoryCsvHeader = "t,beta,kl,recon,setpoint,total";

/// Writes one row for every record whose t is a multiple of `log_every`.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj, std::int64_t log_every = 1) {
  if (log_every < 1) log_every = 1;
  os << kTrajectoryCsvHeader << "\r\n";
  for (const auto& r : traj.records) {
    if (r.t % log_every != 0) continue;
    os << r.t << ',' << format_number(r.beta) << ',' << format_number(r.observed_kl) << ','
       << format_number(r.recon_loss) << ',' << format_number(r.setpoint) << ','
       << format_number(r.total_loss) << "\r\n";
  }
}

struct RunSummary {
  std::string run_id;
  std::string config_hash;
  std::size_t window = 0;
  double kl_mean_final = std::numeric_limits<double>::quiet_NaN();
  double kl_std_final = std::numeric_limits<double>::quiet_NaN();
  double recon_mean_final = std::numeric_limits<double>::quiet_NaN();
  double recon_std_final = std::numeric_limits<double>::quiet_NaN();
  double beta_mean_final = std::numeric_limits<double>::quiet_NaN();
  double beta_std_final = std::numeric_limits<double>::quiet_NaN();
  double beta_min_seen = std::numeric_limits<double>::quiet_NaN();
  double beta_max_seen = std::numeric_limits<double>::quiet_NaN();
  double setpoint_final = std::numeric_limits<double>::quiet_NaN();
  double tracking_error = std::numeric_limits<double>::quiet_NaN();
};

struct MeanStd {
  double mean;
  double std;
};

inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(xs.size()))};
}

/// Number of trailing records in the "final window": the last 10%, at least one.
inline std::size_t final_window(std::size_t n) {
  if (n == 0) return 0;
  return std::max<std::size_t>(1, n / 10);
}

inline RunSummary summarize(const Trajectory& traj, std::string run_id = {}) {
  RunSummary s;
  s.run_id = std::move(run_id);
  s.config_hash = traj.config_hash;
  const std::size_t n = traj.records.size();
  s.window = final_window(n);
  if (n == 0) return s;
  std::vector<double> kl, recon, beta;
  for (std::size_t i = n - s.window; i < n; ++i) {
    kl.push_back(traj.records[i].observed_kl);
    recon.push_back(traj.records[i].recon_loss);
    beta.push_back(traj.records[i].beta);
  }
  const auto k = mean_std(kl), r = mean_std(recon), b = mean_std(beta);
  s.kl_mean_final = k.mean;
  s.kl_std_final = k.std;
  s.recon_mean_final = r.mean;
  s.recon_std_final = r.std;
  s.beta_mean_final = b.mean;
  s.beta_std_final = b.std;
  s.beta_min_seen = s.beta_max_seen = traj.records.front().beta;
  for (const auto& rec : traj.records) {
    s.beta_min_seen = std::min(s.beta_min_seen, rec.beta);
    s.beta_max_seen = std::max(s.beta_max_seen, rec.beta);
  }
  s.setpoint_final = traj.records.back().setpoint;
  s.tracking_error = std::abs(s.kl_mean_final - s.setpoint_final);
  return s;
}

/// One summary row per trajectory. Run ids default to "run<i>".
inline std::vector<RunSummary> compare_runs(std::span<const Trajectory> runs,
                                            std::span<const std::string> names = {}) {
  std::vector<RunSummary> rows;
  rows.reserve(runs.size());
  for (std::size_t i = 0; i < runs.size(); ++i)
    rows.push_back(summarize(runs[i], i < names.size() ? names[i] : "run" + std::to_string(i)));
  return rows;
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return nlohmann::json{{"run_id", s.run_id},
                        {"config_hash", s.config_hash},
                        {"kl_mean_final", num(s.kl_mean_final)},
                        {"kl_std_final", num(s.kl_std_final)},
                        {"recon_mean_final", num(s.recon_mean_final)},
                        {"beta_mean_final", num(s.beta_mean_final)},
                        {"setpoint_final", num(s.setpoint_final)},
                        {"tracking_error", num(s.tracking_error)}};
}

/// Fixed-width text table for terminal output.
inline void print_summary_table(std::ostream& os, std::span<const RunSummary> rows) {
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %10s %10s %10s %10s %10s %10s\n", "run", "kl_mean", "kl_std",
                "recon", "beta_mean", "setpoint", "track_err");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %10.4g %10.4g %10.4g %10.4g %10.4g %10.4g\n", r.run_id.c_str(),
                  r.kl_mean_final, r.kl_std_final, r.recon_mean_final, r.beta_mean_final, r.setpoint_final,
                  r.tracking_error);
    os << line;
  }
}

}  // namespace controlvae
