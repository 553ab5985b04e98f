#include "marlrr/harness.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

#include "marlrr/ablation.hpp"
#include "marlrr/format.hpp"
#include "marlrr/outputs.hpp"
#include "marlrr/parallel.hpp"

namespace fs = std::filesystem;

namespace marlrr {

namespace {

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

template <typename F>
int guarded(const char* command, std::ostream& err, F&& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "marlrr " << command << ": " << one_line(e.what()) << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "marlrr " << command << ": " << one_line(e.what()) << '\n';
    return kExitRuntime;
  }
}

/// Creates `dir`, refusing a non-empty existing one unless forced.
void prepare_dir(const fs::path& dir, bool force) {
  if (dir.empty()) throw ConfigError("--out is required");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path '" + dir.string() + "' is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw ConfigError("output directory '" + dir.string() + "' is not empty (use --force to overwrite)");
    }
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
  if (!out.flush()) throw Error("failed writing '" + path.string() + "'");
}

ExperimentSpec load_spec(const std::string& path) {
  return path.empty() ? ExperimentSpec{} : load_experiment(path);
}

std::string fixed_decimal(double v) { return std::isnan(v) ? std::string() : decimal(v); }

struct SweepPoint {
  int replay_ratio;
  int batch_size;
  double learning_rate;
  std::uint64_t seed;
  std::string name;
};

struct SweepResult {
  bool ok = false;
  std::string error;
  double final_win_rate = std::nan("");
  double final_return = std::nan("");
  int episodes_to_threshold = -1;
  long long total_updates = 0;
  double wall_seconds = 0.0;
};

std::string axis_label(const SweepPoint& p, const ExperimentSpec& spec) {
  std::vector<std::string> parts;
  if (spec.replay_ratios.size() > 1) parts.push_back("N=" + std::to_string(p.replay_ratio));
  if (spec.batch_sizes.size() > 1) parts.push_back("B=" + std::to_string(p.batch_size));
  if (spec.learning_rates.size() > 1) parts.push_back("lr=" + decimal(p.learning_rate));
  if (parts.empty()) return "N=" + std::to_string(p.replay_ratio);
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? " " : "") + parts[i];
  return out;
}

void comparison_plots(const fs::path& dir, const std::vector<std::pair<std::string, std::vector<fs::path>>>& groups,
                      const std::string& title) {
  struct Metric {
    const char* column;
    const char* file;
    const char* label;
  };
  const Metric metrics[] = {{"win_rate", "win_rate.svg", "win rate"},
                            {"mean_return", "return.svg", "mean return"},
                            {"dnr_overall", "dnr.svg", "dormant ratio"}};
  for (const auto& m : metrics) {
    LineChart chart{title, "episode", m.label, {}};
    for (const auto& [label, files] : groups) {
      if (!files.empty()) chart.series.push_back(load_series(label, files, "episode", m.column));
    }
    if (!chart.series.empty()) write_text(dir / m.file, line_chart_svg(chart));
  }
}

}  // namespace

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const ExperimentSpec& spec) {
  if (flag) return *flag;
  if (spec.seed_from_file) return spec.base.seed;
  if (auto env = seed_from_environment()) return *env;
  return 1;
}

std::string sweep_run_name(int replay_ratio, int batch_size, double learning_rate, std::uint64_t seed) {
  return "rr" + std::to_string(replay_ratio) + "_bs" + std::to_string(batch_size) + "_lr" +
         decimal(learning_rate) + "_seed" + std::to_string(seed);
}

std::pair<std::string, std::vector<fs::path>> parse_series_arg(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
    throw ConfigError("series '" + arg + "' must look like label=file1.csv,file2.csv");
  }
  std::vector<fs::path> files;
  std::stringstream ss(arg.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigError("series '" + arg + "' has an empty file name");
    files.emplace_back(item);
  }
  return {arg.substr(0, eq), files};
}

Series load_series(const std::string& label, const std::vector<fs::path>& files, const std::string& x_column,
                   const std::string& y_column) {
  if (files.empty()) throw ConfigError("series '" + label + "' has no input files");
  std::vector<std::vector<double>> ys;
  std::vector<double> grid;
  std::vector<std::string> misaligned;
  for (const auto& path : files) {
    const CsvTable table = read_csv_file(path);
    for (const auto& col : {x_column, y_column}) {
      bool found = false;
      for (const auto& h : table.header) found = found || h == col;
      if (!found) throw ConfigError(path.string() + ": no column '" + col + "'");
    }
    auto x = table.numbers(x_column);
    if (grid.empty() && ys.empty()) {
      grid = x;
    } else if (x != grid) {
      misaligned.push_back(path.string());
      continue;
    }
    ys.push_back(table.numbers(y_column));
  }
  if (!misaligned.empty()) {
    std::string list;
    for (std::size_t i = 0; i < misaligned.size(); ++i) list += (i ? ", " : "") + misaligned[i];
    throw ConfigError("series '" + label + "': x grid differs from " + files.front().string() + " in " + list);
  }
  if (grid.empty()) throw ConfigError("series '" + label + "': " + files.front().string() + " has no rows");
  Series s;
  s.label = label;
  s.x = grid;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<double> samples;
    for (const auto& y : ys) samples.push_back(y[i]);
    const MeanSe m = mean_se(samples);
    if (!std::isfinite(m.mean) || !std::isfinite(m.se)) {
      throw ConfigError("series '" + label + "': non-numeric " + y_column + " value");
    }
    s.mean.push_back(m.mean);
    s.se.push_back(m.se);
  }
  return s;
}

int cmd_train(const TrainOptions& options, std::ostream& log, std::ostream& err) {
  return guarded("train", err, [&] {
    if (options.out.empty()) throw ConfigError("--out is required");
    ExperimentSpec spec = load_spec(options.config);
    spec.base.seed = resolve_seed(options.seed, spec);
    if (options.replay_ratio) spec.base.replay_ratio = *options.replay_ratio;
    spec.validate();
    const fs::path dir(options.out);
    prepare_dir(dir, options.force);
    if (!options.dump_trajectories) fs::remove(dir / "trajectories.jsonl");
    write_text(dir / "resolved_config", resolved_text(spec));
    RunWriter writer(dir, options.dump_trajectories);
    const RunMetrics metrics = run(spec.base, &writer);
    writer.finish(metrics, spec.base.win_threshold);
    const EvalRecord* last = metrics.final_eval();
    log << "episodes " << metrics.episodes << ", updates " << metrics.gradient_updates << ", final win_rate "
        << (last ? decimal(last->result.win_rate) : "n/a") << '\n';
  });
}

int cmd_sweep(const SweepOptions& options, std::ostream& log, std::ostream& err) {
  return guarded("sweep", err, [&] {
    if (options.out.empty()) throw ConfigError("--out is required");
    if (options.jobs < 1) throw ConfigError("--jobs must be >= 1");
    const ExperimentSpec spec = load_spec(options.config);
    spec.validate();
    const fs::path dir(options.out);
    prepare_dir(dir, options.force);
    write_text(dir / "resolved_config", resolved_text(spec));

    std::vector<SweepPoint> points;
    for (int rr : spec.replay_ratios)
      for (int bs : spec.batch_sizes)
        for (double lr : spec.learning_rates)
          for (std::uint64_t seed : spec.seeds) points.push_back({rr, bs, lr, seed, sweep_run_name(rr, bs, lr, seed)});

    std::vector<SweepResult> results(points.size());
    std::mutex log_mutex;
    parallel_for(points.size(), options.jobs, [&](std::size_t k) {
      const SweepPoint& p = points[k];
      SweepResult& r = results[k];
      const auto start = std::chrono::steady_clock::now();
      try {
        ExperimentSpec run_spec = spec;
        run_spec.base.replay_ratio = p.replay_ratio;
        run_spec.base.batch_size = p.batch_size;
        run_spec.base.alpha_theta = p.learning_rate;
        run_spec.base.alpha_phi = p.learning_rate;
        run_spec.base.seed = p.seed;
        run_spec.base.validate();
        const fs::path run_dir = dir / p.name;
        fs::create_directories(run_dir);
        write_text(run_dir / "resolved_config", resolved_text(run_spec));
        RunWriter writer(run_dir);
        const RunMetrics m = run(run_spec.base, &writer);
        writer.finish(m, spec.base.win_threshold);
        r.ok = true;
        if (const EvalRecord* last = m.final_eval()) {
          r.final_win_rate = last->result.win_rate;
          r.final_return = last->result.mean_return;
        }
        r.episodes_to_threshold = m.episodes_to_threshold(spec.base.win_threshold);
        r.total_updates = m.gradient_updates;
      } catch (const std::exception& e) {
        r.error = one_line(e.what());
      }
      r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::lock_guard lock(log_mutex);
      if (r.ok) {
        log << p.name << ": final win_rate " << decimal(r.final_win_rate) << '\n';
      } else {
        err << "marlrr sweep: run " << p.name << " failed: " << r.error << '\n';
      }
    });

    auto summary = open_output(dir / "summary.csv");
    summary << "run,replay_ratio,batch_size,learning_rate,seed,status,final_win_rate,final_return,"
               "episodes_to_threshold,total_updates\n";
    auto timing = open_output(dir / "timing.csv");
    timing << "run,wall_seconds\n";
    std::map<std::string, std::vector<fs::path>> by_label;
    std::vector<std::string> label_order;
    for (std::size_t k = 0; k < points.size(); ++k) {
      const SweepPoint& p = points[k];
      const SweepResult& r = results[k];
      write_csv_row(summary, {p.name, std::to_string(p.replay_ratio), std::to_string(p.batch_size),
                              decimal(p.learning_rate), std::to_string(p.seed), r.ok ? "ok" : "failed",
                              fixed_decimal(r.final_win_rate), fixed_decimal(r.final_return),
                              r.episodes_to_threshold < 0 ? "" : std::to_string(r.episodes_to_threshold),
                              std::to_string(r.total_updates)});
      timing << p.name << ',' << decimal(r.wall_seconds) << '\n';
      const std::string label = axis_label(p, spec);
      if (!by_label.count(label)) label_order.push_back(label);
      auto& files = by_label[label];
      if (r.ok) files.push_back(dir / p.name / "eval.csv");
    }
    if (!summary.flush() || !timing.flush()) throw Error("failed writing sweep summary");
    std::vector<std::pair<std::string, std::vector<fs::path>>> groups;
    for (const auto& label : label_order) groups.emplace_back(label, by_label[label]);
    comparison_plots(dir, groups, "sweep");
  });
}

int cmd_budget(const BudgetOptions& options, std::ostream& log, std::ostream& err) {
  return guarded("budget", err, [&] {
    if (options.out.empty()) throw ConfigError("--out is required");
    if (options.jobs < 1) throw ConfigError("--jobs must be >= 1");
    const ExperimentSpec spec = load_spec(options.config);
    spec.validate();
    if (spec.budget_updates.empty() || spec.budget_episodes.empty()) {
      throw ConfigError("budget_updates and budget_episodes must be non-empty");
    }
    const fs::path dir(options.out);
    prepare_dir(dir, options.force);
    write_text(dir / "resolved_config", resolved_text(spec));

    auto runs = open_output(dir / "budget_runs.csv");
    runs << "update_budget,episode_budget,replay_ratio,infeasible,seed,status,final_win_rate,total_updates\n";
    const auto cells = budget_grid(
        spec.base, spec.budget_updates, spec.budget_episodes, spec.seeds, options.jobs,
        [&](const BudgetCell& cell, std::uint64_t seed, const RunMetrics&) {
          const std::size_t k = cell.win_rates.size() - 1;
          const bool ok = cell.errors[k].empty();
          write_csv_row(runs, {std::to_string(cell.update_budget), std::to_string(cell.episode_budget),
                               std::to_string(cell.replay_ratio), cell.infeasible ? "1" : "0",
                               std::to_string(seed), ok ? "ok" : "failed", fixed_decimal(cell.win_rates[k]),
                               std::to_string(cell.updates[k])});
          if (!ok) {
            err << "marlrr budget: run U=" << cell.update_budget << " E=" << cell.episode_budget
                << " seed " << seed << " failed: " << one_line(cell.errors[k]) << '\n';
          }
        });
    if (!runs.flush()) throw Error("failed writing budget_runs.csv");

    auto grid = open_output(dir / "budget.csv");
    grid << "update_budget";
    for (int e : spec.budget_episodes) grid << ",episodes_" << e;
    grid << '\n';
    BarChart chart;
    chart.title = "final win rate by budget";
    chart.y_label = "mean final win rate";
    for (int e : spec.budget_episodes) chart.bar_labels.push_back(std::to_string(e) + " episodes");
    std::size_t c = 0;
    for (long long u : spec.budget_updates) {
      grid << u;
      chart.groups.push_back(std::to_string(u) + " updates");
      chart.values.emplace_back();
      chart.errors.emplace_back();
      for (std::size_t e = 0; e < spec.budget_episodes.size(); ++e, ++c) {
        const BudgetCell& cell = cells[c];
        const double mean = cell.mean_win_rate();
        grid << ',' << fixed_decimal(mean);
        std::vector<double> ok;
        for (double w : cell.win_rates)
          if (!std::isnan(w)) ok.push_back(w);
        const MeanSe m = ok.empty() ? MeanSe{} : mean_se(ok);
        chart.values.back().push_back(m.mean);
        chart.errors.back().push_back(m.se);
        log << "U=" << u << " E=" << cell.episode_budget << " N=" << cell.replay_ratio
            << (cell.infeasible ? " (infeasible)" : "") << ": mean win_rate " << fixed_decimal(mean) << '\n';
      }
      grid << '\n';
    }
    if (!grid.flush()) throw Error("failed writing budget.csv");
    write_text(dir / "budget.svg", bar_chart_svg(chart));
  });
}

int cmd_plot(const PlotOptions& options, std::ostream& log, std::ostream& err) {
  return guarded("plot", err, [&] {
    if (options.out.empty()) throw ConfigError("--out is required");
    if (options.series.empty()) throw ConfigError("at least one --series is required");
    std::vector<std::pair<std::string, std::vector<fs::path>>> inputs;
    for (const auto& arg : options.series) inputs.push_back(parse_series_arg(arg));
    std::string svg;
    if (options.bars) {
      BarChart chart;
      chart.title = options.title;
      chart.y_label = options.y;
      chart.groups = {"final " + options.y};
      chart.values.emplace_back();
      chart.errors.emplace_back();
      for (const auto& [label, files] : inputs) {
        std::vector<double> finals;
        for (const auto& f : files) {
          const auto y = read_csv_file(f).numbers(options.y);
          if (y.empty() || std::isnan(y.back())) throw ConfigError(f.string() + ": no final " + options.y);
          finals.push_back(y.back());
        }
        const MeanSe m = mean_se(finals);
        chart.bar_labels.push_back(label);
        chart.values.back().push_back(m.mean);
        chart.errors.back().push_back(m.se);
      }
      svg = bar_chart_svg(chart);
    } else {
      LineChart chart{options.title, options.x, options.y, {}};
      std::vector<std::string> misaligned;
      for (const auto& [label, files] : inputs) {
        chart.series.push_back(load_series(label, files, options.x, options.y));
        if (chart.series.back().x != chart.series.front().x) {
          for (const auto& f : files) misaligned.push_back(f.string());
        }
      }
      if (!misaligned.empty()) {
        std::string list;
        for (std::size_t i = 0; i < misaligned.size(); ++i) list += (i ? ", " : "") + misaligned[i];
        throw ConfigError("x grid differs from series '" + chart.series.front().label + "' in " + list);
      }
      svg = line_chart_svg(chart);
    }
    const fs::path out(options.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, svg);
    log << "wrote " << out.string() << '\n';
  });
}

namespace {

void write_dnr_plot(const fs::path& path, const std::map<std::string, std::vector<std::pair<double, double>>>& layers,
                    const std::string& title) {
  LineChart chart{title, "episode", "dormant ratio", {}};
  for (const auto& [layer, points] : layers) {
    Series s;
    s.label = layer;
    for (const auto& [x, y] : points) {
      s.x.push_back(x);
      s.mean.push_back(y);
      s.se.push_back(0.0);
    }
    chart.series.push_back(std::move(s));
  }
  write_text(path, line_chart_svg(chart));
}

void extract_dnr(const fs::path& run_dir, const fs::path& out_dir) {
  std::ifstream in(run_dir / "events.jsonl");
  if (!in) throw ConfigError("cannot open '" + (run_dir / "events.jsonl").string() + "'");
  auto csv = open_output(out_dir / "dnr.csv");
  csv << kDnrHeader << '\n';
  std::map<std::string, std::vector<std::pair<double, double>>> layers;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json event;
    try {
      event = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("events.jsonl:" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string kind = event.value("event", "");
    if (kind != "eval" && kind != "baseline_dnr") continue;
    const int episode = event.at("episode").get<int>();
    for (const auto& l : event.at("dnr")) {
      const std::string name = l.at("layer").get<std::string>();
      const double ratio = l.at("ratio").get<double>();
      csv << episode << ',' << name << ',' << l.at("width").get<int>() << ',' << l.at("dormant").get<int>() << ','
          << decimal(ratio) << '\n';
      layers[name].emplace_back(episode, ratio);
    }
  }
  if (!csv.flush()) throw Error("failed writing dnr.csv");
  write_dnr_plot(out_dir / "dnr.svg", layers, "dormant ratio per layer");
}

}  // namespace

int cmd_dnr_report(const DnrReportOptions& options, std::ostream& log, std::ostream& err) {
  return guarded("dnr-report", err, [&] {
    if (options.out.empty()) throw ConfigError("--out is required");
    if (options.ablation == !options.from.empty()) throw ConfigError("give exactly one of --from or --ablation");
    const fs::path dir(options.out);
    if (!options.ablation) {
      if (!fs::is_directory(options.from)) throw ConfigError("run directory '" + options.from + "' does not exist");
      fs::create_directories(dir);
      if (!options.force && (fs::exists(dir / "dnr.csv") || fs::exists(dir / "dnr.svg"))) {
        throw ConfigError("'" + dir.string() + "' already holds a DNR report (use --force to overwrite)");
      }
      extract_dnr(options.from, dir);
      log << "wrote " << (dir / "dnr.csv").string() << '\n';
      return;
    }

    ExperimentSpec spec = load_spec(options.config);
    spec.base.seed = resolve_seed(options.seed, spec);
    spec.base.replay_ratio = options.replay_ratio;
    spec.validate();
    prepare_dir(dir, options.force);
    write_text(dir / "resolved_config", resolved_text(spec));
    fs::create_directories(dir / "gru");
    fs::create_directories(dir / "ff");
    ExperimentSpec gru_spec = spec, ff_spec = spec;
    gru_spec.base.agent_kind = AgentKind::Recurrent;
    ff_spec.base.agent_kind = AgentKind::Feedforward;
    write_text(dir / "gru" / "resolved_config", resolved_text(gru_spec));
    write_text(dir / "ff" / "resolved_config", resolved_text(ff_spec));
    RunWriter gru_writer(dir / "gru");
    RunWriter ff_writer(dir / "ff");
    const AblationResult result = compare_rnn_ablation(spec.base, &gru_writer, &ff_writer, options.jobs);
    gru_writer.finish(result.recurrent.metrics, spec.base.win_threshold);
    ff_writer.finish(result.feedforward.metrics, spec.base.win_threshold);

    auto csv = open_output(dir / "dnr.csv");
    csv << kDnrHeader << '\n';
    auto traces = open_output(dir / "traces.csv");
    traces << "episode,gru_dnr,ff_dnr,gru_return,ff_return\n";
    const auto& g = result.recurrent;
    const auto& f = result.feedforward;
    for (std::size_t i = 0; i < g.episodes.size(); ++i) {
      for (const auto* t : {&g, &f}) {
        DnrReport labelled = t->reports[i];
        for (auto& l : labelled.layers) l.layer = to_string(t->kind) + ":" + l.layer;
        write_dnr_rows(csv, t->episodes[i], labelled);
      }
      traces << g.episodes[i] << ',' << decimal(g.dnr_overall[i]) << ',' << decimal(f.dnr_overall[i]) << ','
             << decimal(g.mean_return[i]) << ',' << decimal(f.mean_return[i]) << '\n';
    }
    if (!csv.flush() || !traces.flush()) throw Error("failed writing ablation traces");
    auto to_series = [](const std::string& label, const AblationTrace& t, const std::vector<double>& y) {
      Series s{label, {}, y, std::vector<double>(y.size(), 0.0)};
      for (int e : t.episodes) s.x.push_back(e);
      return s;
    };
    write_text(dir / "dnr.svg",
               line_chart_svg({"dormant ratio, GRU vs feedforward", "episode", "dormant ratio",
                               {to_series("gru", g, g.dnr_overall), to_series("ff", f, f.dnr_overall)}}));
    write_text(dir / "return.svg",
               line_chart_svg({"evaluation return, GRU vs feedforward", "episode", "mean return",
                               {to_series("gru", g, g.mean_return), to_series("ff", f, f.mean_return)}}));
    log << "final dnr gru " << (g.dnr_overall.empty() ? "n/a" : decimal(g.dnr_overall.back())) << ", ff "
        << (f.dnr_overall.empty() ? "n/a" : decimal(f.dnr_overall.back())) << '\n';
  });
}

}  // namespace marlrr
