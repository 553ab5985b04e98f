#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "marlrr/agent.hpp"
#include "marlrr/envs.hpp"
#include "marlrr/mixers.hpp"
#include "marlrr/plasticity.hpp"
#include "marlrr/replay.hpp"

namespace marlrr {

enum class EnvKind { Gridworld, Matrix };
enum class ResetScope { Head, All };

std::string to_string(EnvKind kind);
std::string to_string(ResetScope scope);
std::string to_string(AgentKind kind);

/// Every hyperparameter of one training run.
struct TrainConfig {
  int replay_ratio = 1;  // N: gradient updates per collected episode
  double alpha_theta = 0.0005;
  double alpha_phi = 0.0005;
  double eta_theta = 0.005;
  double eta_phi = 0.005;
  double gamma = 0.99;
  int batch_size = 32;
  int buffer_capacity = 5000;
  int total_episodes = 20000;  // J
  int eval_every = 200;
  int eval_episodes = 32;
  MixerKind mixer = MixerKind::Vdn;
  EnvKind env = EnvKind::Gridworld;
  GridworldConfig grid;
  std::string payoff_file;  // matrix game; empty = identity payoff
  std::uint64_t seed = 1;
  int reset_every = 0;  // episodes between resets, 0 = never
  ResetScope reset_scope = ResetScope::Head;
  EpsilonSchedule epsilon;
  int hidden_dim = 64;
  AgentKind agent_kind = AgentKind::Recurrent;
  int qmix_embed = 32;
  double dnr_rho = kDefaultRho;
  int probe_batch = 32;
  long long max_updates = 0;  // 0 = unlimited; budget runs stop updating at the cap
  double win_threshold = 0.8;

  void validate() const;
};

std::unique_ptr<Environment> make_env(const TrainConfig& config);

/// Network shapes derived from a config and its environment.
struct Networks {
  DecPomdpSpec env;
  AgentNetworkSpec agent;
  MixerSpec mixer;
  ParamLayout agent_layout;
  ParamLayout mixer_layout;
};

Networks make_networks(const TrainConfig& config, const DecPomdpSpec& env);

/// Online parameters θ, φ and their targets θ', φ'.
struct LearnerState {
  ParamStore agent;
  ParamStore mixer;
  ParamStore target_agent;
  ParamStore target_mixer;
};

/// Fresh θ, φ drawn from `rng`; targets start as exact copies.
LearnerState init_learner(const Networks& nets, Rng& rng);

struct TdLoss {
  double loss = 0.0;
  GradStore agent_grads;
  GradStore mixer_grads;
  double valid_cells = 0.0;
};

/// Masked mean of δ² over valid transitions, where
/// δ = g_φ(s, u_θ(taken)) − (r + γ(1−terminated) g_φ'(s', u_θ'(greedy under θ'))).
/// The target side carries no gradient.
TdLoss compute_td_loss(const EpisodeBatch& batch, const Networks& nets, const LearnerState& state,
                       double gamma);

/// Bootstrap targets y [T·B × 1] in (time, episode) order.
Mat td_targets(const EpisodeBatch& batch, const Networks& nets, const ParamStore& target_agent,
               const ParamStore& target_mixer, double gamma);

struct UpdateRecord {
  long long update = 0;  // 1-based running count
  int episode = 0;
  long long env_steps = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct EvalResult {
  double discounted_return = 0.0;
  double mean_return = 0.0;
  double win_rate = 0.0;
};

struct EvalRecord {
  int episode = 0;
  long long env_steps = 0;
  long long updates = 0;
  EvalResult result;
  DnrReport dnr;
};

/// Counters the inner loop reports against.
struct TrainProgress {
  int episode = 0;
  long long env_steps = 0;
  long long updates = 0;
  long long batches_drawn = 0;
  long long ema_applications = 0;
};

using UpdateCallback = std::function<void(const UpdateRecord&)>;

/// Inner loop: N iterations of (fresh sample, TD loss, SGD on θ
/// and φ, EMA of θ' and φ'). No-op when the buffer holds fewer than
/// batch_size episodes or the update cap is reached. Returns updates made.
int train_step(const ReplayBuffer& buffer, LearnerState& state, const Networks& nets,
               const TrainConfig& config, Rng& rng, TrainProgress& progress,
               const UpdateCallback& on_update = {});

/// Greedy (ε = 0) episodes on a fresh copy of `env_template`, episode k
/// reset with the k-th seed drawn from `rng`.
EvalResult evaluate(const ParamStore& agent_params, const Networks& nets,
                    const Environment& env_template, int episodes, double gamma, Rng& rng);

/// Receives metrics as a run produces them.
class MetricsSink {
 public:
  virtual ~MetricsSink() = default;
  virtual void on_update(const UpdateRecord&) {}
  virtual void on_eval(const EvalRecord&) {}
  virtual void on_baseline(const DnrReport&) {}
  virtual void on_episode(int /*episode*/, const Trajectory&) {}
  virtual void on_reset(int /*episode*/, const std::vector<std::string>& /*names*/) {}
};

struct RunMetrics {
  std::vector<UpdateRecord> updates;
  std::vector<EvalRecord> evals;
  DnrReport baseline_dnr;
  int episodes = 0;
  long long gradient_updates = 0;
  long long env_steps = 0;
  long long batches_drawn = 0;
  long long ema_applications = 0;
  int episodes_with_updates = 0;
  int resets = 0;
  bool update_cap_hit = false;

  /// Episode index of the first evaluation with win rate ≥ threshold, or −1.
  int episodes_to_threshold(double threshold) const;
  const EvalRecord* final_eval() const { return evals.empty() ? nullptr : &evals.back(); }
};

/// Collect, store and update, end to end for `config.total_episodes` episodes.
RunMetrics run(const TrainConfig& config, MetricsSink* sink = nullptr);

/// `run`, also handing back the final learner state.
RunMetrics run_with_state(const TrainConfig& config, MetricsSink* sink, LearnerState* final_state);

struct BudgetCell {
  long long update_budget = 0;
  int episode_budget = 0;
  int replay_ratio = 1;
  bool infeasible = false;  // update budget below the episode budget
  std::vector<double> win_rates;  // one per seed, NaN for a failed run
  std::vector<long long> updates;  // recorded update totals per seed
  std::vector<std::string> errors;  // per seed, empty when the run completed

  /// Mean over the runs that completed; NaN when none did.

  double mean_win_rate() const;
};

using BudgetRunCallback = std::function<void(const BudgetCell&, std::uint64_t, const RunMetrics&)>;

/// N = max(1, round(U / E)) per (U, E) pair, runs to E episodes capping
/// updates at U, for every seed. Up to `jobs` runs execute concurrently;
/// `on_run` is called afterwards in grid order. A failing run is recorded in
/// its cell and does not stop the others.
std::vector<BudgetCell> budget_grid(const TrainConfig& base, const std::vector<long long>& update_budgets,
                                    const std::vector<int>& episode_budgets,
                                    const std::vector<std::uint64_t>& seeds, int jobs = 1,
                                    const BudgetRunCallback& on_run = {});

/// Config of one budget run.
TrainConfig budget_config(const TrainConfig& base, long long update_budget, int episode_budget,
                          std::uint64_t seed);

/// Stream ids used to split a run seed into independent generators.
enum class Stream : std::uint64_t { Init = 1, Env = 2, Explore = 3, Sample = 4, Eval = 5, Probe = 6, Reset = 7 };

}  // namespace marlrr
