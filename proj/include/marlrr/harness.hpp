#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "marlrr/config.hpp"
#include "marlrr/svg.hpp"

namespace marlrr {

/// Raises the allocator's mmap and trim thresholds. No-op outside glibc.
void tune_allocator();

/// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct TrainOptions {
  std::string config;  // empty = all defaults
  std::optional<std::uint64_t> seed;
  std::optional<int> replay_ratio;
  std::string out;
  bool force = false;
  bool dump_trajectories = false;
};

struct SweepOptions {
  std::string config;
  std::string out;
  int jobs = 1;
  bool force = false;
};

struct BudgetOptions {
  std::string config;
  std::string out;
  int jobs = 1;
  bool force = false;
};

struct PlotOptions {
  std::vector<std::string> series;  // "label=path1,path2,..."
  std::string x = "episode";
  std::string y = "win_rate";
  std::string out;
  std::string title;
  bool bars = false;  // final value per series instead of curves
};

struct DnrReportOptions {
  std::string from;  // existing run directory
  bool ablation = false;
  std::string config;
  std::optional<std::uint64_t> seed;
  int replay_ratio = 4;
  std::string out;
  int jobs = 1;
  bool force = false;
};

/// Each command returns an exit code: 0 on success, 2 for configuration or
/// usage errors, 1 for runtime failures. Diagnostics go to `err` as a single
/// line; progress lines go to `log`.
int cmd_train(const TrainOptions& options, std::ostream& log, std::ostream& err);
int cmd_sweep(const SweepOptions& options, std::ostream& log, std::ostream& err);
int cmd_budget(const BudgetOptions& options, std::ostream& log, std::ostream& err);
int cmd_plot(const PlotOptions& options, std::ostream& log, std::ostream& err);
int cmd_dnr_report(const DnrReportOptions& options, std::ostream& log, std::ostream& err);

/// Seed resolution: explicit flag, then the config file, then MARLRR_SEED,
/// then 1.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const ExperimentSpec& spec);

/// Directory of one sweep run, named from its axis values.
std::string sweep_run_name(int replay_ratio, int batch_size, double learning_rate, std::uint64_t seed);

/// Loads the y column of each file over a shared x grid and reduces it to
/// mean ± standard error. Files whose x column differs from the first
/// file's raise ConfigError listing them.
Series load_series(const std::string& label, const std::vector<std::filesystem::path>& files,
                   const std::string& x_column, const std::string& y_column);

/// Splits "label=path1,path2" into its parts.
std::pair<std::string, std::vector<std::filesystem::path>> parse_series_arg(const std::string& arg);

}  // namespace marlrr
