#include "marlrr/trainer.hpp"

#include <cmath>

#include "marlrr/parallel.hpp"

namespace marlrr {

std::string to_string(EnvKind kind) { return kind == EnvKind::Gridworld ? "gridworld" : "matrix"; }

std::string to_string(ResetScope scope) { return scope == ResetScope::Head ? "head" : "all"; }

std::string to_string(AgentKind kind) { return kind == AgentKind::Recurrent ? "gru" : "ff"; }

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& range) {
    throw ConfigError(key + " must be " + range);
  };
  if (replay_ratio < 1) fail("replay_ratio", ">= 1");
  if (!(alpha_theta >= 0.0)) fail("alpha_theta", ">= 0");
  if (!(alpha_phi >= 0.0)) fail("alpha_phi", ">= 0");
  if (!(eta_theta > 0.0 && eta_theta < 1.0)) fail("eta_theta", "in (0, 1)");
  if (!(eta_phi > 0.0 && eta_phi < 1.0)) fail("eta_phi", "in (0, 1)");
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma", "in [0, 1)");
  if (batch_size < 1) fail("batch_size", ">= 1");
  if (buffer_capacity < 1) fail("buffer_capacity", ">= 1");
  if (total_episodes < 1) fail("total_episodes", ">= 1");
  if (eval_every < 1) fail("eval_every", ">= 1");
  if (eval_episodes < 1) fail("eval_episodes", ">= 1");
  if (reset_every < 0) fail("reset_every", ">= 0");
  if (!(epsilon.start >= 0.0 && epsilon.start <= 1.0)) fail("epsilon_start", "in [0, 1]");
  if (!(epsilon.end >= 0.0 && epsilon.end <= 1.0)) fail("epsilon_end", "in [0, 1]");
  if (!(epsilon.decay_steps >= 0.0)) fail("epsilon_decay_steps", ">= 0");
  if (hidden_dim < 1) fail("hidden_dim", ">= 1");
  if (qmix_embed < 1) fail("qmix_embed", ">= 1");
  if (!(dnr_rho >= 0.0)) fail("dnr_rho", ">= 0");
  if (probe_batch < 1) fail("probe_batch", ">= 1");
  if (max_updates < 0) fail("max_updates", ">= 0");
  if (!(win_threshold >= 0.0 && win_threshold <= 1.0)) fail("win_threshold", "in [0, 1]");
  if (env == EnvKind::Gridworld) {
    GridworldConfig g = grid;
    g.gamma = gamma;
    g.validate();
  }
}

std::unique_ptr<Environment> make_env(const TrainConfig& config) {
  if (config.env == EnvKind::Matrix) {
    Mat payoff = config.payoff_file.empty() ? MatrixGame::default_payoff() : load_payoff(config.payoff_file);
    return std::make_unique<MatrixGame>(std::move(payoff), config.gamma);
  }
  GridworldConfig g = config.grid;
  g.gamma = config.gamma;
  return std::make_unique<CaptureGridworld>(g);
}

Networks make_networks(const TrainConfig& config, const DecPomdpSpec& env) {
  Networks nets;
  nets.env = env;
  nets.agent = {env.obs_dim, env.n_actions, env.n_agents, config.hidden_dim, config.agent_kind};
  nets.mixer = {config.mixer, env.n_agents, env.n_actions, env.state_dim, config.qmix_embed};
  nets.agent_layout = agent_layout(nets.agent);
  nets.mixer_layout = mixer_layout(nets.mixer);
  return nets;
}

LearnerState init_learner(const Networks& nets, Rng& rng) {
  LearnerState s;
  s.agent = init_params(nets.agent_layout, rng);
  s.mixer = init_params(nets.mixer_layout, rng);
  s.target_agent = s.agent;
  s.target_mixer = s.mixer;
  return s;
}

namespace {

// Padding rows carry an all-zero availability mask; any action will do there.
Mat usable_mask(Mat avail) {
  for (Eigen::Index r = 0; r < avail.rows(); ++r) {
    if (avail.row(r).isZero()) avail.row(r).setOnes();
  }
  return avail;
}

std::vector<int> greedy_actions(const Mat& utilities, const Mat& mask) {
  std::vector<int> actions(static_cast<std::size_t>(utilities.rows()));
  for (Eigen::Index r = 0; r < utilities.rows(); ++r) {
    int best = -1;
    for (Eigen::Index a = 0; a < utilities.cols(); ++a) {
      if (mask(r, a) == 0.0) continue;
      if (best < 0 || utilities(r, a) > utilities(r, best)) best = static_cast<int>(a);
    }
    actions[static_cast<std::size_t>(r)] = best;
  }
  return actions;
}

struct SlotRows {
  Mat states;     // [episode-slots × state_dim]
  Mat available;  // [episode-slots·n × A]
  std::vector<int> actions;
};

// Batch views for slots [first, last) of `plan`, stacked in slot order.
SlotRows slot_rows(const EpisodeBatch& batch, const SlotPlan& plan, int first, int last, bool with_actions) {
  Eigen::Index count = 0;
  for (int t = first; t < last; ++t) count += plan.counts[static_cast<std::size_t>(t)];
  const Eigen::Index n = batch.n_agents;
  SlotRows rows;
  rows.states.resize(count, batch.state_dim);
  rows.available.resize(count * n, batch.n_actions);
  Eigen::Index at = 0;
  for (int t = first; t < last; ++t) {
    const auto episodes = plan.episodes_at(t);
    const Eigen::Index k = static_cast<Eigen::Index>(episodes.size());
    rows.states.middleRows(at, k) = batch.states_at(t, episodes);
    rows.available.middleRows(at * n, k * n) = batch.available_at(t, episodes);
    if (with_actions) {
      const auto a = batch.actions_at(t, episodes);
      rows.actions.insert(rows.actions.end(), a.begin(), a.end());
    }
    at += k;
  }
  return rows;
}

// q_tot [R × 1] for stacked utilities [R·n × A] evaluated at `actions`.
Tape::Var mix_rows(Tape& tape, const ParamStore& mixer_params, const Networks& nets, Tape::Var utilities,
                   const std::vector<int>& actions, const Mat& mask, Mat states) {
  const int n = nets.env.n_agents;
  MixerInput in;
  if (nets.mixer.kind == MixerKind::Qplex) {
    in = make_mixer_input(tape, utilities, actions, mask, std::move(states), n);
  } else {
    in.chosen = tape.reshape(tape.gather_cols(utilities, actions), states.rows(), n);
    in.states = std::move(states);
  }
  return mix(tape, mixer_params, nets.mixer, in).q_tot;
}

// Targets for every real transition, in the row order of packed_plan(batch, T, 1).
Mat packed_targets(const EpisodeBatch& batch, const Networks& nets, const ParamStore& target_agent,
                   const ParamStore& target_mixer, double gamma) {
  const int T = batch.max_length;
  const SlotPlan plan = packed_plan(batch, T + 1, 0);
  const Mat u = agent_values(target_agent, nets.agent, batch, plan);
  const Eigen::Index n = batch.n_agents;
  const Eigen::Index skip = static_cast<Eigen::Index>(plan.counts.front()) * n;
  const SlotRows next = slot_rows(batch, plan, 1, T + 1, false);
  const Mat mask = usable_mask(next.available);
  Tape tape;
  auto u_next = tape.input(u.bottomRows(u.rows() - skip));
  const auto greedy = greedy_actions(tape.value(u_next), mask);
  const Mat q = tape.value(mix_rows(tape, target_mixer, nets, u_next, greedy, mask, next.states));
  Mat y(q.rows(), 1);
  Eigen::Index row = 0;
  for (int t = 0; t < T; ++t) {
    for (int b : plan.episodes_at(t + 1)) {
      const Eigen::Index k = static_cast<Eigen::Index>(b) * T + t;
      y(row, 0) = batch.rewards[k] + gamma * (1.0 - batch.terminated[k]) * q(row, 0);
      ++row;
    }
  }
  return y;
}

}  // namespace

Mat td_targets(const EpisodeBatch& batch, const Networks& nets, const ParamStore& target_agent,
               const ParamStore& target_mixer, double gamma) {
  const int T = batch.max_length;
  const int B = batch.batch_size;
  const Mat packed = packed_targets(batch, nets, target_agent, target_mixer, gamma);
  const SlotPlan plan = packed_plan(batch, T, 1);
  Mat y = Mat::Zero(static_cast<Eigen::Index>(T) * B, 1);
  Eigen::Index row = 0;
  for (int t = 0; t < T; ++t)
    for (int b : plan.episodes_at(t)) y(static_cast<Eigen::Index>(t) * B + b, 0) = packed(row++, 0);
  return y;
}

TdLoss compute_td_loss(const EpisodeBatch& batch, const Networks& nets, const LearnerState& state,
                       double gamma) {
  if (!(batch.valid_count() > 0.0)) throw ContractViolation("compute_td_loss: batch has no valid transitions");
  const int T = batch.max_length;
  const Mat y = packed_targets(batch, nets, state.target_agent, state.target_mixer, gamma);

  Tape tape;
  const SlotPlan plan = packed_plan(batch, T, 1);
  const AgentTrace trace = agent_forward(tape, state.agent, nets.agent, batch, plan);
  const SlotRows rows = slot_rows(batch, plan, 0, T, true);
  const auto q = mix_rows(tape, state.mixer, nets, trace.utilities, rows.actions, rows.available, rows.states);
  const auto loss = tape.masked_mean_square(q, y, Mat::Ones(y.rows(), 1));
  tape.backward(loss);

  TdLoss out;
  out.loss = tape.value(loss)(0, 0);
  out.agent_grads = tape.gradients(state.agent);
  out.mixer_grads = tape.gradients(state.mixer);
  out.valid_cells = batch.valid_count();
  return out;
}

int train_step(const ReplayBuffer& buffer, LearnerState& state, const Networks& nets,
               const TrainConfig& config, Rng& rng, TrainProgress& progress,
               const UpdateCallback& on_update) {
  if (!buffer.ready(static_cast<std::size_t>(config.batch_size))) return 0;
  int done = 0;
  for (int k = 0; k < config.replay_ratio; ++k) {
    if (config.max_updates > 0 && progress.updates >= config.max_updates) break;
    const EpisodeBatch batch = buffer.sample(static_cast<std::size_t>(config.batch_size), rng, nets.env);
    ++progress.batches_drawn;
    const TdLoss td = compute_td_loss(batch, nets, state, config.gamma);
    if (!std::isfinite(td.loss)) throw NumericError("TD loss became non-finite");
    sgd_step(state.agent, td.agent_grads, config.alpha_theta);
    sgd_step(state.mixer, td.mixer_grads, config.alpha_phi);
    ema_update(state.target_agent, state.agent, config.eta_theta);
    ema_update(state.target_mixer, state.mixer, config.eta_phi);
    ++progress.ema_applications;
    ++progress.updates;
    ++done;
    if (on_update) {
      const double sq = td.agent_grads.norm() * td.agent_grads.norm() +
                        td.mixer_grads.norm() * td.mixer_grads.norm();
      on_update({progress.updates, progress.episode, progress.env_steps, td.loss, std::sqrt(sq)});
    }
  }
  return done;
}

namespace {

struct Rollout {
  Trajectory trajectory;
  double discounted = 0.0;
};

Rollout rollout(Environment& env, AgentStepper& stepper, const ParamStore& agent_params,
                std::uint64_t seed, double gamma, Rng& rng,
                const std::function<double(int)>& epsilon) {
  Rollout r;
  r.trajectory.seed = seed;
  EnvView view = env.reset(seed);
  stepper.reset();
  std::vector<int> last;
  double discount = 1.0;
  for (int k = 0;; ++k) {
    const Mat u = stepper.step(agent_params, view.observations, last);
    const std::vector<int> actions = select_actions(u, view.available, epsilon(k), rng);
    StepOutcome out = env.step(actions);
    Transition t;
    t.state = std::move(view.state);
    t.obs = std::move(view.observations);
    t.available = std::move(view.available);
    t.actions = actions;
    t.reward = out.reward;
    t.terminated = out.terminated;
    t.next_state = out.next.state;
    t.next_obs = out.next.observations;
    t.next_available = out.next.available;
    r.trajectory.transitions.push_back(std::move(t));
    r.discounted += discount * out.reward;
    discount *= gamma;
    last = actions;
    view = std::move(out.next);
    if (out.terminated) {
      r.trajectory.won = out.won;
      break;
    }
  }
  return r;
}

}  // namespace

EvalResult evaluate(const ParamStore& agent_params, const Networks& nets,
                    const Environment& env_template, int episodes, double gamma, Rng& rng) {
  if (episodes < 1) throw ContractViolation("evaluate: episodes must be >= 1");
  auto env = env_template.clone();
  AgentStepper stepper(nets.agent);
  EvalResult result;
  for (int k = 0; k < episodes; ++k) {
    const std::uint64_t seed = rng.next();
    const Rollout r = rollout(*env, stepper, agent_params, seed, gamma, rng, [](int) { return 0.0; });
    result.discounted_return += r.discounted;
    result.mean_return += r.trajectory.total_reward();
    result.win_rate += r.trajectory.won ? 1.0 : 0.0;
  }
  result.discounted_return /= episodes;
  result.mean_return /= episodes;
  result.win_rate /= episodes;
  return result;
}

int RunMetrics::episodes_to_threshold(double threshold) const {
  for (const auto& e : evals) {
    if (e.result.win_rate >= threshold) return e.episode;
  }
  return -1;
}

RunMetrics run(const TrainConfig& config, MetricsSink* sink) {
  return run_with_state(config, sink, nullptr);
}

RunMetrics run_with_state(const TrainConfig& config, MetricsSink* sink, LearnerState* final_state) {
  config.validate();
  auto env = make_env(config);
  const Networks nets = make_networks(config, env->spec());

  Rng init_rng = Rng::stream(config.seed, static_cast<std::uint64_t>(Stream::Init));
  Rng env_rng = Rng::stream(config.seed, static_cast<std::uint64_t>(Stream::Env));
  Rng explore_rng = Rng::stream(config.seed, static_cast<std::uint64_t>(Stream::Explore));
  Rng sample_rng = Rng::stream(config.seed, static_cast<std::uint64_t>(Stream::Sample));
  Rng probe_rng = Rng::stream(config.seed, static_cast<std::uint64_t>(Stream::Probe));
  Rng reset_rng = Rng::stream(config.seed, static_cast<std::uint64_t>(Stream::Reset));

  LearnerState state = init_learner(nets, init_rng);
  ReplayBuffer buffer(static_cast<std::size_t>(config.buffer_capacity));
  AgentStepper stepper(nets.agent);
  TrainProgress progress;
  RunMetrics metrics;
  const NameSelector reset_selector =
      config.reset_scope == ResetScope::All ? select_all() : select_prefix(agent_names::kHead + ".");

  auto record_update = [&](const UpdateRecord& u) {
    metrics.updates.push_back(u);
    if (sink) sink->on_update(u);
  };

  for (int j = 1; j <= config.total_episodes; ++j) {
    progress.episode = j;
    Rollout r = rollout(*env, stepper, state.agent, env_rng.next(), config.gamma, explore_rng,
                        [&](int k) {
                          return epsilon_at(static_cast<double>(progress.env_steps + k), config.epsilon);
                        });
    progress.env_steps += static_cast<long long>(r.trajectory.length());
    if (sink) sink->on_episode(j, r.trajectory);
    buffer.push(std::move(r.trajectory));

    if (j == 1) {
      metrics.baseline_dnr = probe(state.agent, nets.agent, state.mixer, nets.mixer, buffer, nets.env,
                                   static_cast<std::size_t>(config.probe_batch), probe_rng, {}, config.dnr_rho);
      if (sink) sink->on_baseline(metrics.baseline_dnr);
    }

    if (train_step(buffer, state, nets, config, sample_rng, progress, record_update) > 0) {
      ++metrics.episodes_with_updates;
    }

    if (j % config.eval_every == 0 || j == config.total_episodes) {
      Rng eval_rng = Rng::stream(config.seed, static_cast<std::uint64_t>(Stream::Eval));
      EvalRecord rec;
      rec.episode = j;
      rec.env_steps = progress.env_steps;
      rec.updates = progress.updates;
      rec.result = evaluate(state.agent, nets, *env, config.eval_episodes, config.gamma, eval_rng);
      rec.dnr = probe(state.agent, nets.agent, state.mixer, nets.mixer, buffer, nets.env,
                      static_cast<std::size_t>(config.probe_batch), probe_rng, {}, config.dnr_rho);
      if (sink) sink->on_eval(rec);
      metrics.evals.push_back(std::move(rec));
    }

    if (config.reset_every > 0 && j % config.reset_every == 0) {
      const auto names = reset_selected(state.agent, nets.agent_layout, reset_selector, reset_rng);
      hard_copy(state.target_agent, state.agent, names);
      ++metrics.resets;
      if (sink) sink->on_reset(j, names);
    }
  }

  metrics.episodes = config.total_episodes;
  metrics.gradient_updates = progress.updates;
  metrics.env_steps = progress.env_steps;
  metrics.batches_drawn = progress.batches_drawn;
  metrics.ema_applications = progress.ema_applications;
  metrics.update_cap_hit = config.max_updates > 0 && progress.updates >= config.max_updates;
  if (final_state) *final_state = std::move(state);
  return metrics;
}

double BudgetCell::mean_win_rate() const {
  double s = 0.0;
  int n = 0;
  for (double w : win_rates) {
    if (std::isnan(w)) continue;
    s += w;
    ++n;
  }
  return n == 0 ? std::nan("") : s / n;
}

TrainConfig budget_config(const TrainConfig& base, long long update_budget, int episode_budget,
                          std::uint64_t seed) {
  TrainConfig cfg = base;
  cfg.seed = seed;
  cfg.total_episodes = episode_budget;
  cfg.replay_ratio =
      std::max(1, static_cast<int>(std::llround(static_cast<double>(update_budget) / episode_budget)));
  cfg.max_updates = update_budget;
  return cfg;
}

std::vector<BudgetCell> budget_grid(const TrainConfig& base, const std::vector<long long>& update_budgets,
                                    const std::vector<int>& episode_budgets,
                                    const std::vector<std::uint64_t>& seeds, int jobs,
                                    const BudgetRunCallback& on_run) {
  if (update_budgets.empty() || episode_budgets.empty() || seeds.empty()) {
    throw ConfigError("budget_grid: budget lists and seeds must be non-empty");
  }
  std::vector<BudgetCell> cells;
  for (long long U : update_budgets) {
    if (U <= 0) throw ConfigError("budget_grid: update budgets must be positive");
    for (int E : episode_budgets) {
      if (E <= 0) throw ConfigError("budget_grid: episode budgets must be positive");
      BudgetCell cell;
      cell.update_budget = U;
      cell.episode_budget = E;
      cell.replay_ratio = budget_config(base, U, E, 0).replay_ratio;
      cell.infeasible = U < E;
      cells.push_back(std::move(cell));
    }
  }
  const std::size_t per_cell = seeds.size();
  std::vector<RunMetrics> results(cells.size() * per_cell);
  std::vector<std::string> errors(results.size());
  parallel_for(results.size(), jobs, [&](std::size_t k) {
    const BudgetCell& cell = cells[k / per_cell];
    try {
      results[k] = run(budget_config(base, cell.update_budget, cell.episode_budget, seeds[k % per_cell]));
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  });
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t s = 0; s < per_cell; ++s) {
      const RunMetrics& m = results[c * per_cell + s];
      const std::string& error = errors[c * per_cell + s];
      const EvalRecord* last = m.final_eval();
      cells[c].win_rates.push_back(error.empty() && last ? last->result.win_rate : std::nan(""));
      cells[c].updates.push_back(m.gradient_updates);
      cells[c].errors.push_back(error);
      if (on_run) on_run(cells[c], seeds[s], m);
    }
  }
  return cells;
}

}  // namespace marlrr
