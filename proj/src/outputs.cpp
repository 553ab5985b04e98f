#include "marlrr/outputs.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "marlrr/errors.hpp"
#include "marlrr/format.hpp"

namespace marlrr {

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw ContractViolation("no column '" + name + "'");
}

std::vector<double> CsvTable::numbers(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    const std::string& cell = row[c];
    if (cell.empty()) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw ConfigError("column '" + name + "': '" + cell + "' is not a number");
    }
    out.push_back(v);
  }
  return out;
}

CsvTable read_csv(std::istream& in, const std::string& source) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  auto fail = [&](int line, const std::string& what) {
    throw ConfigError(source + ":" + std::to_string(line) + ": " + what);
  };
  if (text.empty()) fail(1, "empty file");
  if (text.back() != '\n') fail(1, "missing final newline");

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  int line = 1;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '"') {
      if (!field.empty()) fail(line, "quote inside unquoted field");
      ++i;
      for (;;) {
        if (i >= text.size()) fail(line, "unterminated quoted field");
        if (text[i] == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        if (text[i] == '\n') ++line;
        field += text[i++];
      }
      if (i < text.size() && text[i] != ',' && text[i] != '\n') fail(line, "text after closing quote");
      continue;
    }
    if (c == '\r') fail(line, "carriage return (expected LF line endings)");
    if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      ++line;
    } else {
      field += c;
    }
    ++i;
  }

  CsvTable table;
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      fail(static_cast<int>(r) + 1, "expected " + std::to_string(table.header.size()) + " fields, found " +
                                       std::to_string(records[r].size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

CsvTable read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  return read_csv(in, path.string());
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_field(fields[i]);
  }
  out << '\n';
}

std::string csv_text(const CsvTable& table) {
  std::ostringstream out;
  write_csv_row(out, table.header);
  for (const auto& row : table.rows) write_csv_row(out, row);
  return out.str();
}

void write_dnr_rows(std::ostream& out, int episode, const DnrReport& report) {
  for (const auto& layer : report.layers) {
    out << episode << ',' << layer.layer << ',' << layer.width << ',' << layer.dormant << ','
        << decimal(layer.ratio) << '\n';
  }
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

namespace {

std::string dnr_json(const DnrReport& report) {
  std::string out = "[";
  for (std::size_t i = 0; i < report.layers.size(); ++i) {
    const auto& l = report.layers[i];
    if (i) out += ',';
    out += "{\"layer\":" + json_string(l.layer) + ",\"width\":" + std::to_string(l.width) +
           ",\"dormant\":" + std::to_string(l.dormant) + ",\"ratio\":" + decimal(l.ratio) + "}";
  }
  return out + "]";
}

}  // namespace

RunWriter::RunWriter(const std::filesystem::path& dir, bool dump_trajectories)
    : updates_(open_output(dir / "updates.csv")),
      eval_(open_output(dir / "eval.csv")),
      events_(open_output(dir / "events.jsonl")),
      dnr_(open_output(dir / "dnr.csv")) {
  updates_ << kUpdatesHeader << '\n';
  eval_ << kEvalHeader << '\n';
  dnr_ << kDnrHeader << '\n';
  if (dump_trajectories) trajectories_ = open_output(dir / "trajectories.jsonl");
}

void RunWriter::on_update(const UpdateRecord& u) {
  updates_ << u.update << ',' << u.episode << ',' << u.env_steps << ',' << decimal(u.loss) << ','
           << decimal(u.grad_norm) << '\n';
  events_ << "{\"event\":\"update\",\"update\":" << u.update << ",\"episode\":" << u.episode
          << ",\"env_steps\":" << u.env_steps << ",\"loss\":" << decimal(u.loss)
          << ",\"grad_norm\":" << decimal(u.grad_norm) << "}\n";
}

void RunWriter::on_eval(const EvalRecord& e) {
  eval_ << e.episode << ',' << e.env_steps << ',' << e.updates << ',' << decimal(e.result.mean_return) << ','
        << decimal(e.result.discounted_return) << ',' << decimal(e.result.win_rate) << ','
        << decimal(e.dnr.overall) << '\n';
  events_ << "{\"event\":\"eval\",\"episode\":" << e.episode << ",\"env_steps\":" << e.env_steps
          << ",\"updates\":" << e.updates << ",\"mean_return\":" << decimal(e.result.mean_return)
          << ",\"discounted_return\":" << decimal(e.result.discounted_return)
          << ",\"win_rate\":" << decimal(e.result.win_rate) << ",\"dnr_overall\":" << decimal(e.dnr.overall)
          << ",\"dnr\":" << dnr_json(e.dnr) << "}\n";
  write_dnr_rows(dnr_, e.episode, e.dnr);
}

void RunWriter::on_baseline(const DnrReport& dnr) {
  events_ << "{\"event\":\"baseline_dnr\",\"episode\":0,\"dnr_overall\":" << decimal(dnr.overall)
          << ",\"dnr\":" << dnr_json(dnr) << "}\n";
  write_dnr_rows(dnr_, 0, dnr);
}

void RunWriter::on_episode(int, const Trajectory& trajectory) {
  if (trajectories_.is_open()) write_trajectory_record(trajectories_, trajectory);
}

void RunWriter::on_reset(int episode, const std::vector<std::string>& names) {
  events_ << "{\"event\":\"reset\",\"episode\":" << episode << ",\"params\":[";
  for (std::size_t i = 0; i < names.size(); ++i) events_ << (i ? "," : "") << json_string(names[i]);
  events_ << "]}\n";
}

void RunWriter::finish(const RunMetrics& metrics, double threshold) {
  const int reached = metrics.episodes_to_threshold(threshold);
  const EvalRecord* last = metrics.final_eval();
  events_ << "{\"event\":\"summary\",\"episodes\":" << metrics.episodes
          << ",\"gradient_updates\":" << metrics.gradient_updates << ",\"env_steps\":" << metrics.env_steps
          << ",\"batches_drawn\":" << metrics.batches_drawn
          << ",\"ema_applications\":" << metrics.ema_applications << ",\"resets\":" << metrics.resets
          << ",\"final_win_rate\":" << (last ? decimal(last->result.win_rate) : "null")
          << ",\"final_return\":" << (last ? decimal(last->result.mean_return) : "null")
          << ",\"episodes_to_threshold\":" << (reached < 0 ? "null" : std::to_string(reached)) << "}\n";
  for (std::ofstream* f : {&updates_, &eval_, &events_, &dnr_, &trajectories_}) {
    if (f->is_open()) {
      f->flush();
      if (!*f) throw Error("failed writing run outputs");
    }
  }
}

}  // namespace marlrr
