#include <CLI11.hpp>

#include <iostream>

#include "marlrr/harness.hpp"

int main(int argc, char** argv) {
  marlrr::tune_allocator();
  CLI::App app{"marlrr: replay-ratio experiments for cooperative multi-agent Q-learning"};
  app.require_subcommand(1);

  marlrr::TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train one run and write its metrics");
  train_cmd->add_option("--config", train.config, "key = value config file");
  train_cmd->add_option("--seed", train.seed, "Run seed (overrides config and MARLRR_SEED)");
  train_cmd->add_option("--rr", train.replay_ratio, "Replay ratio N (overrides config)");
  train_cmd->add_option("--out", train.out, "Output directory");
  train_cmd->add_flag("--force", train.force, "Overwrite an existing output directory");
  train_cmd->add_flag("--dump-trajectories", train.dump_trajectories, "Also write trajectories.jsonl");

  marlrr::SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run the replay-ratio / batch-size / learning-rate grid");
  sweep_cmd->add_option("--config", sweep.config, "key = value config file");
  sweep_cmd->add_option("--out", sweep.out, "Output directory");
  sweep_cmd->add_option("--jobs", sweep.jobs, "Concurrent runs");
  sweep_cmd->add_flag("--force", sweep.force, "Overwrite an existing output directory");

  marlrr::BudgetOptions budget;
  auto* budget_cmd = app.add_subcommand("budget", "Run the update-budget x episode-budget grid");
  budget_cmd->add_option("--config", budget.config, "key = value config file");
  budget_cmd->add_option("--out", budget.out, "Output directory");
  budget_cmd->add_option("--jobs", budget.jobs, "Concurrent runs");
  budget_cmd->add_flag("--force", budget.force, "Overwrite an existing output directory");

  marlrr::PlotOptions plot;
  auto* plot_cmd = app.add_subcommand("plot", "Plot mean and standard error of CSV columns");
  plot_cmd->add_option("--series", plot.series, "label=file1.csv,file2.csv (repeatable)");
  plot_cmd->add_option("--x", plot.x, "x column")->capture_default_str();
  plot_cmd->add_option("--y", plot.y, "y column")->capture_default_str();
  plot_cmd->add_option("--title", plot.title, "Chart title");
  plot_cmd->add_option("--out", plot.out, "Output SVG path");
  plot_cmd->add_flag("--bars", plot.bars, "Bar chart of each series' final value");

  marlrr::DnrReportOptions dnr;
  auto* dnr_cmd = app.add_subcommand("dnr-report", "Dormant-neuron report from a run, or the GRU/feedforward ablation");
  dnr_cmd->add_option("--from", dnr.from, "Run directory written by train");
  dnr_cmd->add_flag("--ablation", dnr.ablation, "Train GRU and feedforward agents side by side");
  dnr_cmd->add_option("--config", dnr.config, "key = value config file (ablation)");
  dnr_cmd->add_option("--seed", dnr.seed, "Run seed (ablation)");
  dnr_cmd->add_option("--rr", dnr.replay_ratio, "Replay ratio N (ablation)")->capture_default_str();
  dnr_cmd->add_option("--jobs", dnr.jobs, "Concurrent runs (ablation)");
  dnr_cmd->add_option("--out", dnr.out, "Output directory");
  dnr_cmd->add_flag("--force", dnr.force, "Overwrite existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "marlrr: " << e.what() << '\n';
    return marlrr::kExitConfig;
  }

  if (*train_cmd) return marlrr::cmd_train(train, std::cout, std::cerr);
  if (*sweep_cmd) return marlrr::cmd_sweep(sweep, std::cout, std::cerr);
  if (*budget_cmd) return marlrr::cmd_budget(budget, std::cout, std::cerr);
  if (*plot_cmd) return marlrr::cmd_plot(plot, std::cout, std::cerr);
  if (*dnr_cmd) return marlrr::cmd_dnr_report(dnr, std::cout, std::cerr);
  return marlrr::kExitConfig;
}
