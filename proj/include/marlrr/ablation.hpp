#pragma once

#include <string>
#include <vector>

#include "marlrr/trainer.hpp"

namespace marlrr {

/// DNR and evaluation return at each checkpoint of one run.
struct AblationTrace {
  AgentKind kind = AgentKind::Recurrent;
  std::vector<int> episodes;
  std::vector<double> dnr_overall;
  std::vector<double> mean_return;
  std::vector<double> win_rate;
  std::vector<DnrReport> reports;
  RunMetrics metrics;
};

struct AblationResult {
  AblationTrace recurrent;
  AblationTrace feedforward;
};

/// Trains `config` twice, once with the GRU agent and once with the GRU
/// swapped for a width-matched feedforward layer; everything else, seed
/// included, is shared. Sinks are optional and receive each run's stream.
AblationResult compare_rnn_ablation(const TrainConfig& config, MetricsSink* recurrent_sink = nullptr,
                                    MetricsSink* feedforward_sink = nullptr, int jobs = 1);

}  // namespace marlrr
