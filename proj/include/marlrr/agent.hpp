#pragma once

#include <string>
#include <vector>

#include "marlrr/layers.hpp"
#include "marlrr/params.hpp"
#include "marlrr/replay.hpp"
#include "marlrr/tape.hpp"

namespace marlrr {

enum class AgentKind {
  Recurrent,    // Linear → ReLU → GRU → Linear
  Feedforward,  // Linear → ReLU → Linear → ReLU → Linear (width-matched ablation)
};

/// Shared utility network u_θ(o_i, a_i). Input is
/// concat(observation, one-hot last action, one-hot agent id).
struct AgentNetworkSpec {
  int obs_dim = 1;
  int n_actions = 1;
  int n_agents = 1;
  int hidden_dim = 64;
  AgentKind kind = AgentKind::Recurrent;

  int input_dim() const { return obs_dim + n_actions + n_agents; }
  /// Width of the state carried between steps; 0 for the feedforward agent.
  int recurrent_dim() const { return kind == AgentKind::Recurrent ? hidden_dim : 0; }
  void validate() const;
};

namespace agent_names {
inline const std::string kEncoder = "agent.fc1";
inline const std::string kRecurrent = "agent.gru";
inline const std::string kFeedforward = "agent.ff";
inline const std::string kHead = "agent.fc2";
}  // namespace agent_names

ParamLayout agent_layout(const AgentNetworkSpec& spec);

/// Input rows for `obs` [R×obs_dim] whose row r belongs to agent r mod n.
Mat agent_inputs(const Mat& obs, const Mat& last_actions, int n_agents);

/// Which episodes each time slot of an unroll carries. Slot t holds the
/// first counts[t] episodes of `order`; counts never increase, so a hidden
/// state only ever loses trailing rows.
struct SlotPlan {
  std::vector<int> order;
  std::vector<int> counts;

  int slots() const { return static_cast<int>(counts.size()); }
  std::vector<int> episodes_at(int t) const;
  /// Total episode-slots, i.e. rows of a stacked mixer input.
  Eigen::Index total() const;
};

/// Every episode at every slot, in batch order (padding included).
SlotPlan dense_plan(const EpisodeBatch& batch, int slots);

/// Longest episodes first (ties keep batch order); slot t carries the
/// episodes with length − t ≥ min_remaining. min_remaining = 1 keeps exactly
/// the real transitions, 0 also keeps each episode's final next-view slot.
SlotPlan packed_plan(const EpisodeBatch& batch, int slots, int min_remaining);

/// One unrolled agent pass. Activations are stacked over slots: rows
/// [offsets[t], offsets[t+1]) belong to slot t, ordered (episode, agent).
struct AgentTrace {
  SlotPlan plan;
  std::vector<Eigen::Index> offsets;
  Tape::Var encoder;    // post-ReLU encoder [rows × H]
  Tape::Var hidden;     // recurrent (or feedforward) output [rows × H]
  Tape::Var utilities;  // [rows × A]
};

/// Unrolls the network over the plan from a zero hidden state.
AgentTrace agent_forward(Tape& tape, const ParamStore& params, const AgentNetworkSpec& spec,
                         const EpisodeBatch& batch, const SlotPlan& plan);

/// Dense unroll over `slots` time slots. Pass batch.max_length + 1 to include
/// the final next-observation slot.
AgentTrace agent_forward(Tape& tape, const ParamStore& params, const AgentNetworkSpec& spec,
                         const EpisodeBatch& batch, int slots);

/// Stacked utilities of agent_forward without recording a tape.
Mat agent_values(const ParamStore& params, const AgentNetworkSpec& spec, const EpisodeBatch& batch,
                 const SlotPlan& plan);

/// Utilities as a dense [B × slots × n × A] tensor (no gradient).
Tensor agent_utilities(const ParamStore& params, const AgentNetworkSpec& spec,
                       const EpisodeBatch& batch, int slots);

/// Step-at-a-time evaluation for acting in an environment. Holds the
/// hidden state of every agent; reset at episode start.
class AgentStepper {
 public:
  explicit AgentStepper(AgentNetworkSpec spec);

  void reset();
  /// Utilities [n × A] for observations [n × obs_dim] given last joint action
  /// (empty at t = 0). Advances the recurrent state.
  Mat step(const ParamStore& params, const Mat& obs, const std::vector<int>& last_actions);
  const Mat& hidden() const { return hidden_; }

 private:
  AgentNetworkSpec spec_;
  Mat hidden_;
};

/// ε-greedy per agent: with probability epsilon uniform over available
/// actions, else the masked argmax with the lowest index winning ties.
std::vector<int> select_actions(const Mat& utilities, const Mat& available, double epsilon, Rng& rng);

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  double decay_steps = 50000.0;
};

/// Linear decay from start to end over decay_steps environment steps.
double epsilon_at(double env_steps, const EpsilonSchedule& schedule);

}  // namespace marlrr
