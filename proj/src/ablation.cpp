#include "marlrr/ablation.hpp"

#include "marlrr/parallel.hpp"

namespace marlrr {

namespace {

AblationTrace trace_of(AgentKind kind, RunMetrics metrics) {
  AblationTrace t;
  t.kind = kind;
  for (const auto& e : metrics.evals) {
    t.episodes.push_back(e.episode);
    t.dnr_overall.push_back(e.dnr.overall);
    t.mean_return.push_back(e.result.mean_return);
    t.win_rate.push_back(e.result.win_rate);
    t.reports.push_back(e.dnr);
  }
  t.metrics = std::move(metrics);
  return t;
}

}  // namespace

AblationResult compare_rnn_ablation(const TrainConfig& config, MetricsSink* recurrent_sink,
                                    MetricsSink* feedforward_sink, int jobs) {
  TrainConfig gru = config;
  gru.agent_kind = AgentKind::Recurrent;
  TrainConfig ff = config;
  ff.agent_kind = AgentKind::Feedforward;
  gru.validate();
  ff.validate();

  RunMetrics results[2];
  parallel_for(2, jobs, [&](std::size_t k) {
    results[k] = k == 0 ? run(gru, recurrent_sink) : run(ff, feedforward_sink);
  });
  return {trace_of(AgentKind::Recurrent, std::move(results[0])),
          trace_of(AgentKind::Feedforward, std::move(results[1]))};
}

}  // namespace marlrr
