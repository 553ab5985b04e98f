#pragma once

#include <string>
#include <vector>

#include "marlrr/agent.hpp"
#include "marlrr/mixers.hpp"
#include "marlrr/replay.hpp"

namespace marlrr {

/// Normalized activity score per neuron:
/// d_i = mean_x |h_i(x)| / ((1/H) Σ_k mean_x |h_k(x)|).
/// Rows of `activations` are samples, columns neurons. A layer whose mean
/// absolute activation is exactly zero gets all-zero scores.
Vec neuron_scores(const Mat& activations);

/// Fraction of scores ≤ rho.
double dormant_ratio(const Vec& scores, double rho);

inline constexpr double kDefaultRho = 0.001;

struct LayerDnr {
  std::string layer;
  int width = 0;
  Vec scores;
  int dormant = 0;
  double ratio = 0.0;
};

struct DnrReport {
  std::vector<LayerDnr> layers;
  int dormant = 0;
  int total = 0;
  double overall = 0.0;  // dormant neurons / probed neurons
  double rho = kDefaultRho;

  const LayerDnr* find(const std::string& layer) const;
};

DnrReport dnr_report(const std::vector<std::pair<std::string, Mat>>& captures, double rho);

/// Which activations a probe captures.
struct ProbeLayers {
  bool encoder = true;       // post-ReLU encoder
  bool recurrent = true;     // GRU output (feedforward layer in the ablation)
  bool mixer_hidden = true;  // QMIX hidden layer; ignored for other mixers
  bool output = false;       // agent utilities head
};

inline const std::string kLayerEncoder = "agent.encoder";
inline const std::string kLayerRecurrent = "agent.recurrent";
inline const std::string kLayerOutput = "agent.output";
inline const std::string kLayerMixerHidden = "mixer.hidden";

/// Samples a probe batch (whole buffer when smaller than `probe_batch`),
/// evaluates the networks and reports DNR over valid cells only.
DnrReport probe(const ParamStore& agent_params, const AgentNetworkSpec& agent_spec,
                const ParamStore& mixer_params, const MixerSpec& mixer_spec,
                const ReplayBuffer& buffer, const DecPomdpSpec& env_spec, std::size_t probe_batch,
                Rng& rng, const ProbeLayers& layers = {}, double rho = kDefaultRho);

/// Same as `probe` on an explicit batch.
DnrReport probe_batch(const ParamStore& agent_params, const AgentNetworkSpec& agent_spec,
                      const ParamStore& mixer_params, const MixerSpec& mixer_spec,
                      const EpisodeBatch& batch, const ProbeLayers& layers = {},
                      double rho = kDefaultRho);

}  // namespace marlrr
