#include "marlrr/plasticity.hpp"

#include <algorithm>

namespace marlrr {

Vec neuron_scores(const Mat& activations) {
  if (activations.rows() == 0 || activations.cols() == 0) {
    throw ContractViolation("neuron_scores: empty activation capture");
  }
  const Vec mean_abs = activations.cwiseAbs().colwise().mean().transpose();
  const double layer_mean = mean_abs.mean();
  if (layer_mean == 0.0) return Vec::Zero(mean_abs.size());
  return mean_abs / layer_mean;
}

double dormant_ratio(const Vec& scores, double rho) {
  if (!(rho >= 0.0)) throw ContractViolation("dormant_ratio: rho must be >= 0");
  if (scores.size() == 0) return 0.0;
  const auto dormant = (scores.array() <= rho).count();
  return static_cast<double>(dormant) / static_cast<double>(scores.size());
}

const LayerDnr* DnrReport::find(const std::string& layer) const {
  for (const auto& l : layers)
    if (l.layer == layer) return &l;
  return nullptr;
}

DnrReport dnr_report(const std::vector<std::pair<std::string, Mat>>& captures, double rho) {
  DnrReport report;
  report.rho = rho;
  for (const auto& [name, acts] : captures) {
    LayerDnr l;
    l.layer = name;
    l.width = static_cast<int>(acts.cols());
    l.scores = neuron_scores(acts);
    l.dormant = static_cast<int>((l.scores.array() <= rho).count());
    l.ratio = dormant_ratio(l.scores, rho);
    report.dormant += l.dormant;
    report.total += l.width;
    report.layers.push_back(std::move(l));
  }
  report.overall = report.total ? static_cast<double>(report.dormant) / report.total : 0.0;
  return report;
}

DnrReport probe_batch(const ParamStore& agent_params, const AgentNetworkSpec& agent_spec,
                      const ParamStore& mixer_params, const MixerSpec& mixer_spec,
                      const EpisodeBatch& batch, const ProbeLayers& layers, double rho) {
  Tape tape;
  const int T = batch.max_length;
  const SlotPlan plan = packed_plan(batch, T, 1);
  const AgentTrace trace = agent_forward(tape, agent_params, agent_spec, batch, plan);
  std::vector<std::pair<std::string, Mat>> captures;
  if (layers.encoder) captures.emplace_back(kLayerEncoder, tape.value(trace.encoder));
  if (layers.recurrent) captures.emplace_back(kLayerRecurrent, tape.value(trace.hidden));
  if (layers.output) captures.emplace_back(kLayerOutput, tape.value(trace.utilities));
  if (layers.mixer_hidden && mixer_spec.kind == MixerKind::Qmix) {
    Mat states(plan.total(), batch.state_dim);
    std::vector<int> actions;
    Eigen::Index at = 0;
    for (int t = 0; t < T; ++t) {
      const auto episodes = plan.episodes_at(t);
      states.middleRows(at, static_cast<Eigen::Index>(episodes.size())) = batch.states_at(t, episodes);
      at += static_cast<Eigen::Index>(episodes.size());
      const auto a = batch.actions_at(t, episodes);
      actions.insert(actions.end(), a.begin(), a.end());
    }
    MixerInput in;
    in.chosen = tape.reshape(tape.gather_cols(trace.utilities, actions), states.rows(), batch.n_agents);
    in.states = std::move(states);
    captures.emplace_back(kLayerMixerHidden, tape.value(qmix_mix(tape, mixer_params, mixer_spec, in).hidden));
  }
  return dnr_report(captures, rho);
}

DnrReport probe(const ParamStore& agent_params, const AgentNetworkSpec& agent_spec,
                const ParamStore& mixer_params, const MixerSpec& mixer_spec,
                const ReplayBuffer& buffer, const DecPomdpSpec& env_spec, std::size_t probe_batch_size,
                Rng& rng, const ProbeLayers& layers, double rho) {
  if (buffer.size() == 0) throw NotReadyError("probe: replay buffer is empty");
  const std::size_t n = std::min(probe_batch_size, buffer.size());
  const EpisodeBatch batch = buffer.sample(n, rng, env_spec);
  return probe_batch(agent_params, agent_spec, mixer_params, mixer_spec, batch, layers, rho);
}

}  // namespace marlrr
