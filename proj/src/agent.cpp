#include "marlrr/agent.hpp"

#include <algorithm>

namespace marlrr {

void AgentNetworkSpec::validate() const {
  if (obs_dim < 1 || n_actions < 1 || n_agents < 1 || hidden_dim < 1) {
    throw ConfigError("agent network dimensions must all be >= 1");
  }
}

ParamLayout agent_layout(const AgentNetworkSpec& spec) {
  spec.validate();
  ParamLayout layout;
  add_linear(layout, agent_names::kEncoder, spec.input_dim(), spec.hidden_dim);
  if (spec.kind == AgentKind::Recurrent) {
    add_gru(layout, agent_names::kRecurrent, spec.hidden_dim, spec.hidden_dim);
  } else {
    add_linear(layout, agent_names::kFeedforward, spec.hidden_dim, spec.hidden_dim);
  }
  add_linear(layout, agent_names::kHead, spec.hidden_dim, spec.n_actions);
  return layout;
}

Mat agent_inputs(const Mat& obs, const Mat& last_actions, int n_agents) {
  if (obs.rows() != last_actions.rows() || obs.rows() % n_agents != 0) {
    throw DimensionError("agent_inputs: row counts disagree");
  }
  Mat in = Mat::Zero(obs.rows(), obs.cols() + last_actions.cols() + n_agents);
  in.leftCols(obs.cols()) = obs;
  in.middleCols(obs.cols(), last_actions.cols()) = last_actions;
  const Eigen::Index id0 = obs.cols() + last_actions.cols();
  for (Eigen::Index r = 0; r < obs.rows(); ++r) in(r, id0 + r % n_agents) = 1.0;
  return in;
}

std::vector<int> SlotPlan::episodes_at(int t) const {
  const int k = counts.at(static_cast<std::size_t>(t));
  return {order.begin(), order.begin() + k};
}

Eigen::Index SlotPlan::total() const {
  Eigen::Index n = 0;
  for (int c : counts) n += c;
  return n;
}

SlotPlan dense_plan(const EpisodeBatch& batch, int slots) {
  SlotPlan plan;
  plan.order = batch.all_episodes();
  plan.counts.assign(static_cast<std::size_t>(std::max(slots, 0)), batch.batch_size);
  return plan;
}

SlotPlan packed_plan(const EpisodeBatch& batch, int slots, int min_remaining) {
  SlotPlan plan;
  plan.order = batch.all_episodes();
  std::stable_sort(plan.order.begin(), plan.order.end(), [&](int a, int b) {
    return batch.lengths[static_cast<std::size_t>(a)] > batch.lengths[static_cast<std::size_t>(b)];
  });
  for (int t = 0; t < slots; ++t) {
    int k = 0;
    for (int b : plan.order)
      if (batch.lengths[static_cast<std::size_t>(b)] - t >= min_remaining) ++k;
    plan.counts.push_back(k);
  }
  return plan;
}

namespace {

void check_plan(const AgentNetworkSpec& spec, const EpisodeBatch& batch, const SlotPlan& plan) {
  if (batch.obs_dim != spec.obs_dim || batch.n_actions != spec.n_actions ||
      batch.n_agents != spec.n_agents) {
    throw DimensionError("agent_forward: batch shapes disagree with the network spec");
  }
  if (plan.slots() < 1 || plan.slots() > batch.max_length + 1) {
    throw DimensionError("agent_forward: slot count " + std::to_string(plan.slots()) + " out of range");
  }
  for (int t = 0; t < plan.slots(); ++t) {
    const int k = plan.counts[static_cast<std::size_t>(t)];
    if (k < 0 || k > static_cast<int>(plan.order.size()) ||
        (t > 0 && k > plan.counts[static_cast<std::size_t>(t - 1)])) {
      throw ContractViolation("agent_forward: slot counts must be non-increasing and within the batch");
    }
  }
}

std::vector<Eigen::Index> slot_offsets(const SlotPlan& plan, int n_agents) {
  std::vector<Eigen::Index> offsets{0};
  for (int k : plan.counts) offsets.push_back(offsets.back() + static_cast<Eigen::Index>(k) * n_agents);
  return offsets;
}

Mat stacked_inputs(const AgentNetworkSpec& spec, const EpisodeBatch& batch, const SlotPlan& plan,
                   const std::vector<Eigen::Index>& offsets) {
  Mat x(offsets.back(), spec.input_dim());
  for (int t = 0; t < plan.slots(); ++t) {
    const auto episodes = plan.episodes_at(t);
    const Eigen::Index rows = offsets[static_cast<std::size_t>(t) + 1] - offsets[static_cast<std::size_t>(t)];
    x.middleRows(offsets[static_cast<std::size_t>(t)], rows) =
        agent_inputs(batch.obs_at(t, episodes), batch.last_action_one_hot(t, episodes), spec.n_agents);
  }
  return x;
}

}  // namespace

AgentTrace agent_forward(Tape& tape, const ParamStore& params, const AgentNetworkSpec& spec,
                         const EpisodeBatch& batch, const SlotPlan& plan) {
  check_plan(spec, batch, plan);
  AgentTrace trace;
  trace.plan = plan;
  trace.offsets = slot_offsets(plan, spec.n_agents);
  auto x = tape.input(stacked_inputs(spec, batch, plan, trace.offsets));
  trace.encoder = tape.relu(linear(tape, params, agent_names::kEncoder, x));
  if (spec.kind == AgentKind::Recurrent) {
    auto gx = gru_input_projection(tape, params, agent_names::kRecurrent, trace.encoder);
    auto h = tape.input(Mat::Zero(trace.offsets[1], spec.hidden_dim));
    std::vector<Tape::Var> steps;
    for (int t = 0; t < plan.slots(); ++t) {
      const Eigen::Index start = trace.offsets[static_cast<std::size_t>(t)];
      const Eigen::Index rows = trace.offsets[static_cast<std::size_t>(t) + 1] - start;
      if (rows < tape.value(h).rows()) h = tape.slice_rows(h, 0, rows);
      h = gru_cell_projected(tape, params, agent_names::kRecurrent, tape.slice_rows(gx, start, rows), h);
      steps.push_back(h);
    }
    trace.hidden = steps.size() == 1 ? steps.front() : tape.concat_rows(steps);
  } else {
    trace.hidden = tape.relu(linear(tape, params, agent_names::kFeedforward, trace.encoder));
  }
  trace.utilities = linear(tape, params, agent_names::kHead, trace.hidden);
  return trace;
}

AgentTrace agent_forward(Tape& tape, const ParamStore& params, const AgentNetworkSpec& spec,
                         const EpisodeBatch& batch, int slots) {
  return agent_forward(tape, params, spec, batch, dense_plan(batch, slots));
}

Mat agent_values(const ParamStore& params, const AgentNetworkSpec& spec, const EpisodeBatch& batch,
                 const SlotPlan& plan) {
  check_plan(spec, batch, plan);
  const auto offsets = slot_offsets(plan, spec.n_agents);
  const Mat x = stacked_inputs(spec, batch, plan, offsets);
  const Mat enc = linear_forward(params.at(agent_names::kEncoder + ".weight").matrix(),
                                 params.at(agent_names::kEncoder + ".bias").data(), x)
                      .cwiseMax(0.0);
  Mat hidden;
  if (spec.kind == AgentKind::Recurrent) {
    const GruWeights<double> w = gru_weights(params, agent_names::kRecurrent);
    Mat gx = enc * w.input_weights.transpose();
    gx.rowwise() += w.bias;
    hidden.resize(offsets.back(), spec.hidden_dim);
    Mat h = Mat::Zero(offsets[1], spec.hidden_dim);
    for (int t = 0; t < plan.slots(); ++t) {
      const Eigen::Index start = offsets[static_cast<std::size_t>(t)];
      const Eigen::Index rows = offsets[static_cast<std::size_t>(t) + 1] - start;
      if (rows < h.rows()) h.conservativeResize(rows, Eigen::NoChange);
      h = gru_cell_projected(w, gx.middleRows(start, rows), h);
      hidden.middleRows(start, rows) = h;
    }
  } else {
    hidden = linear_forward(params.at(agent_names::kFeedforward + ".weight").matrix(),
                            params.at(agent_names::kFeedforward + ".bias").data(), enc)
                 .cwiseMax(0.0);
  }
  return linear_forward(params.at(agent_names::kHead + ".weight").matrix(),
                        params.at(agent_names::kHead + ".bias").data(), hidden);
}

Tensor agent_utilities(const ParamStore& params, const AgentNetworkSpec& spec,
                       const EpisodeBatch& batch, int slots) {
  const Mat u = agent_values(params, spec, batch, dense_plan(batch, slots));
  const Eigen::Index B = batch.batch_size;
  const Eigen::Index n = spec.n_agents;
  const Eigen::Index A = spec.n_actions;
  Tensor out = Tensor::zeros({B, slots, n, A});
  for (Eigen::Index t = 0; t < slots; ++t) {
    for (Eigen::Index b = 0; b < B; ++b) {
      Eigen::Map<Mat>(out.data().data() + ((b * slots + t) * n) * A, n, A) = u.middleRows((t * B + b) * n, n);
    }
  }
  return out;
}

AgentStepper::AgentStepper(AgentNetworkSpec spec) : spec_(spec) {
  spec_.validate();
  reset();
}

void AgentStepper::reset() { hidden_ = Mat::Zero(spec_.n_agents, spec_.recurrent_dim()); }

Mat AgentStepper::step(const ParamStore& params, const Mat& obs, const std::vector<int>& last_actions) {
  Mat last = Mat::Zero(spec_.n_agents, spec_.n_actions);
  if (!last_actions.empty()) {
    if (static_cast<int>(last_actions.size()) != spec_.n_agents) {
      throw DimensionError("AgentStepper::step: wrong last-action count");
    }
    for (int i = 0; i < spec_.n_agents; ++i) last(i, last_actions[static_cast<std::size_t>(i)]) = 1.0;
  }
  const Mat x = agent_inputs(obs, last, spec_.n_agents);
  const auto& enc_w = params.at(agent_names::kEncoder + ".weight");
  const auto& enc_b = params.at(agent_names::kEncoder + ".bias");
  const Mat enc = linear_forward(enc_w.matrix(), enc_b.data(), x).cwiseMax(0.0);
  Mat features;
  if (spec_.kind == AgentKind::Recurrent) {
    hidden_ = gru_cell_forward(params, agent_names::kRecurrent, enc, hidden_);
    features = hidden_;
  } else {
    features = linear_forward(params.at(agent_names::kFeedforward + ".weight").matrix(),
                              params.at(agent_names::kFeedforward + ".bias").data(), enc)
                   .cwiseMax(0.0);
  }
  return linear_forward(params.at(agent_names::kHead + ".weight").matrix(),
                        params.at(agent_names::kHead + ".bias").data(), features);
}

std::vector<int> select_actions(const Mat& utilities, const Mat& available, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractViolation("select_actions: epsilon outside [0, 1]");
  if (utilities.rows() != available.rows() || utilities.cols() != available.cols()) {
    throw DimensionError("select_actions: utilities and mask shapes differ");
  }
  std::vector<int> actions(static_cast<std::size_t>(utilities.rows()));
  for (Eigen::Index i = 0; i < utilities.rows(); ++i) {
    std::vector<int> legal;
    for (Eigen::Index a = 0; a < utilities.cols(); ++a) {
      if (available(i, a) != 0.0) legal.push_back(static_cast<int>(a));
    }
    if (legal.empty()) {
      throw ContractViolation("select_actions: agent " + std::to_string(i) + " has no available action");
    }
    if (rng.uniform() < epsilon) {
      actions[static_cast<std::size_t>(i)] = legal[static_cast<std::size_t>(rng.below(legal.size()))];
      continue;
    }
    int best = legal.front();
    for (int a : legal) {
      if (utilities(i, a) > utilities(i, best)) best = a;
    }
    actions[static_cast<std::size_t>(i)] = best;
  }
  return actions;
}

double epsilon_at(double env_steps, const EpsilonSchedule& schedule) {
  if (schedule.decay_steps <= 0.0 || env_steps >= schedule.decay_steps) return schedule.end;
  const double frac = std::max(0.0, env_steps) / schedule.decay_steps;
  return schedule.start + (schedule.end - schedule.start) * frac;
}

}  // namespace marlrr
