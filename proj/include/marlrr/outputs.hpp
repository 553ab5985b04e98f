#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include "marlrr/trainer.hpp"

namespace marlrr {

/// Parsed CSV: a header and rows of the same width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column; ContractViolation when absent.
  std::size_t column(const std::string& name) const;
  /// Column parsed as doubles; blank cells become NaN.
  std::vector<double> numbers(const std::string& name) const;
};

/// Strict reader: LF line endings, header row, every row the header's width,
/// RFC 4180 quoting, final newline required. Violations raise ConfigError
/// with the line number.
CsvTable read_csv(std::istream& in, const std::string& source = "<csv>");
CsvTable read_csv_file(const std::filesystem::path& path);

/// Quotes a field only when it holds a comma, quote or newline.
std::string csv_field(const std::string& value);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
std::string csv_text(const CsvTable& table);

inline const std::string kUpdatesHeader = "update,episode,env_steps,loss,grad_norm";
inline const std::string kEvalHeader =
    "episode,env_steps,updates,mean_return,discounted_return,win_rate,dnr_overall";
inline const std::string kDnrHeader = "episode,layer,width,dormant,ratio";

/// Appends one row per layer of `report`.
void write_dnr_rows(std::ostream& out, int episode, const DnrReport& report);

/// Streams a run's metrics into a directory: updates.csv, eval.csv,
/// events.jsonl, dnr.csv and optionally trajectories.jsonl.
class RunWriter : public MetricsSink {
 public:
  RunWriter(const std::filesystem::path& dir, bool dump_trajectories = false);

  void on_update(const UpdateRecord& u) override;
  void on_eval(const EvalRecord& e) override;
  void on_baseline(const DnrReport& dnr) override;
  void on_episode(int episode, const Trajectory& trajectory) override;
  void on_reset(int episode, const std::vector<std::string>& names) override;

  /// Writes the closing summary event and flushes every file.
  void finish(const RunMetrics& metrics, double threshold);

 private:
  std::ofstream updates_;
  std::ofstream eval_;
  std::ofstream events_;
  std::ofstream dnr_;
  std::ofstream trajectories_;
};

/// Opens `path` for writing or throws Error naming it.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace marlrr
