#include "marlrr/replay.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "marlrr/format.hpp"

namespace marlrr {

int EpisodeBatch::action(int b, int t, int agent) const {
  return actions[static_cast<std::size_t>((b * max_length + t) * n_agents + agent)];
}

std::vector<int> EpisodeBatch::all_episodes() const {
  std::vector<int> out(static_cast<std::size_t>(batch_size));
  for (int b = 0; b < batch_size; ++b) out[static_cast<std::size_t>(b)] = b;
  return out;
}

Mat EpisodeBatch::obs_at(int t) const { return obs_at(t, all_episodes()); }
Mat EpisodeBatch::states_at(int t) const { return states_at(t, all_episodes()); }
Mat EpisodeBatch::available_at(int t) const { return available_at(t, all_episodes()); }
std::vector<int> EpisodeBatch::actions_at(int t) const { return actions_at(t, all_episodes()); }
Mat EpisodeBatch::last_action_one_hot(int t) const { return last_action_one_hot(t, all_episodes()); }

Mat EpisodeBatch::obs_at(int t, const std::vector<int>& episodes) const {
  const Eigen::Index k = static_cast<Eigen::Index>(episodes.size());
  Mat out(k * n_agents, obs_dim);
  const auto& d = obs.data();
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index b = episodes[static_cast<std::size_t>(j)];
    const Eigen::Index base = (b * (max_length + 1) + t) * n_agents * obs_dim;
    out.middleRows(j * n_agents, n_agents) = Eigen::Map<const Mat>(d.data() + base, n_agents, obs_dim);
  }
  return out;
}

Mat EpisodeBatch::states_at(int t, const std::vector<int>& episodes) const {
  const Eigen::Index k = static_cast<Eigen::Index>(episodes.size());
  Mat out(k, state_dim);
  const auto& d = states.data();
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index b = episodes[static_cast<std::size_t>(j)];
    const Eigen::Index base = (b * (max_length + 1) + t) * state_dim;
    out.row(j) = Eigen::Map<const Eigen::RowVectorXd>(d.data() + base, state_dim);
  }
  return out;
}

Mat EpisodeBatch::available_at(int t, const std::vector<int>& episodes) const {
  const Eigen::Index k = static_cast<Eigen::Index>(episodes.size());
  Mat out(k * n_agents, n_actions);
  const auto& d = available.data();
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index b = episodes[static_cast<std::size_t>(j)];
    const Eigen::Index base = (b * (max_length + 1) + t) * n_agents * n_actions;
    out.middleRows(j * n_agents, n_agents) = Eigen::Map<const Mat>(d.data() + base, n_agents, n_actions);
  }
  return out;
}

std::vector<int> EpisodeBatch::actions_at(int t, const std::vector<int>& episodes) const {
  std::vector<int> out;
  out.reserve(episodes.size() * static_cast<std::size_t>(n_agents));
  for (int b : episodes)
    for (int i = 0; i < n_agents; ++i) out.push_back(action(b, t, i));
  return out;
}

Mat EpisodeBatch::last_action_one_hot(int t, const std::vector<int>& episodes) const {
  const Eigen::Index k = static_cast<Eigen::Index>(episodes.size());
  Mat out = Mat::Zero(k * n_agents, n_actions);
  if (t == 0) return out;
  for (Eigen::Index j = 0; j < k; ++j) {
    const int b = episodes[static_cast<std::size_t>(j)];
    if (t - 1 >= lengths[static_cast<std::size_t>(b)]) continue;
    for (int i = 0; i < n_agents; ++i) out(j * n_agents + i, action(b, t - 1, i)) = 1.0;
  }
  return out;
}

Mat EpisodeBatch::column_time_major(const Tensor& bt) const {
  Mat out(static_cast<Eigen::Index>(max_length) * batch_size, 1);
  for (int t = 0; t < max_length; ++t)
    for (int b = 0; b < batch_size; ++b) out(t * batch_size + b, 0) = bt[b * max_length + t];
  return out;
}

EpisodeBatch make_batch(const std::vector<const Trajectory*>& episodes, const DecPomdpSpec& spec) {
  if (episodes.empty()) throw ContractViolation("make_batch: no episodes");
  EpisodeBatch batch;
  batch.batch_size = static_cast<int>(episodes.size());
  batch.n_agents = spec.n_agents;
  batch.n_actions = spec.n_actions;
  batch.obs_dim = spec.obs_dim;
  batch.state_dim = spec.state_dim;
  for (const auto* ep : episodes) {
    if (ep->transitions.empty()) throw ContractViolation("make_batch: empty trajectory");
    batch.max_length = std::max(batch.max_length, static_cast<int>(ep->length()));
  }
  const Eigen::Index B = batch.batch_size;
  const Eigen::Index T = batch.max_length;
  const Eigen::Index n = spec.n_agents;
  batch.states = Tensor::zeros({B, T + 1, spec.state_dim});
  batch.obs = Tensor::zeros({B, T + 1, n, spec.obs_dim});
  batch.available = Tensor::zeros({B, T + 1, n, spec.n_actions});
  batch.actions.assign(static_cast<std::size_t>(B * T * n), 0);
  batch.rewards = Tensor::zeros({B, T});
  batch.terminated = Tensor::zeros({B, T});
  batch.valid = Tensor::zeros({B, T});

  auto put_view = [&](Eigen::Index b, Eigen::Index t, const Vec& state, const Mat& obs,
                      const Mat& avail) {
    if (state.size() != spec.state_dim || obs.rows() != n || obs.cols() != spec.obs_dim ||
        avail.rows() != n || avail.cols() != spec.n_actions) {
      throw DimensionError("make_batch: transition shapes disagree with the environment spec");
    }
    batch.states.data().segment((b * (T + 1) + t) * spec.state_dim, spec.state_dim) = state;
    Eigen::Map<Mat>(batch.obs.data().data() + (b * (T + 1) + t) * n * spec.obs_dim, n,
                    spec.obs_dim) = obs;
    Eigen::Map<Mat>(batch.available.data().data() + (b * (T + 1) + t) * n * spec.n_actions, n,
                    spec.n_actions) = avail;
  };

  for (Eigen::Index b = 0; b < B; ++b) {
    const Trajectory& ep = *episodes[static_cast<std::size_t>(b)];
    const auto len = static_cast<Eigen::Index>(ep.length());
    batch.lengths.push_back(static_cast<int>(len));
    for (Eigen::Index t = 0; t < len; ++t) {
      const Transition& tr = ep.transitions[static_cast<std::size_t>(t)];
      put_view(b, t, tr.state, tr.obs, tr.available);
      if (static_cast<Eigen::Index>(tr.actions.size()) != n) {
        throw DimensionError("make_batch: transition has wrong action count");
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        batch.actions[static_cast<std::size_t>((b * T + t) * n + i)] = tr.actions[static_cast<std::size_t>(i)];
      }
      batch.rewards[b * T + t] = tr.reward;
      batch.terminated[b * T + t] = tr.terminated ? 1.0 : 0.0;
      batch.valid[b * T + t] = 1.0;
    }
    const Transition& last = ep.transitions.back();
    put_view(b, len, last.next_state, last.next_obs, last.next_available);
  }
  return batch;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay buffer capacity must be >= 1");
}

void ReplayBuffer::push(Trajectory trajectory) {
  if (trajectory.transitions.empty()) throw ContractViolation("push: empty trajectory");
  storage_.push_back(std::move(trajectory));
  if (storage_.size() > capacity_) storage_.pop_front();
  ++inserted_;
}

EpisodeBatch ReplayBuffer::sample(std::size_t batch_size, Rng& rng, const DecPomdpSpec& spec) const {
  if (batch_size == 0) throw ContractViolation("sample: batch_size must be >= 1");
  if (storage_.size() < batch_size) {
    throw NotReadyError("sample: buffer holds " + std::to_string(storage_.size()) +
                        " episodes, batch needs " + std::to_string(batch_size));
  }
  std::vector<std::size_t> order(storage_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<const Trajectory*> picked;
  picked.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
    picked.push_back(&storage_[order[i]]);
  }
  EpisodeBatch batch = make_batch(picked, spec);
  batch.source_slots.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(batch_size));
  return batch;
}

void write_trajectory_record(std::ostream& out, const Trajectory& trajectory) {
  out << "{\"seed\":" << trajectory.seed << ",\"length\":" << trajectory.length()
      << ",\"won\":" << (trajectory.won ? "true" : "false") << ",\"actions\":[";
  for (std::size_t t = 0; t < trajectory.transitions.size(); ++t) {
    if (t) out << ',';
    out << '[';
    const auto& a = trajectory.transitions[t].actions;
    for (std::size_t i = 0; i < a.size(); ++i) out << (i ? "," : "") << a[i];
    out << ']';
  }
  out << "],\"rewards\":[";
  for (std::size_t t = 0; t < trajectory.transitions.size(); ++t) {
    out << (t ? "," : "") << decimal(trajectory.transitions[t].reward);
  }
  out << "]}\n";
}

std::vector<TrajectoryRecord> read_trajectory_dump(std::istream& in) {
  std::vector<TrajectoryRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TrajectoryRecord r;
      r.seed = j.at("seed").get<std::uint64_t>();
      r.length = j.at("length").get<std::size_t>();
      r.won = j.at("won").get<bool>();
      r.actions = j.at("actions").get<std::vector<std::vector<int>>>();
      r.rewards = j.at("rewards").get<std::vector<double>>();
      if (r.actions.size() != r.length || r.rewards.size() != r.length) {
        throw ConfigError("length disagrees with actions/rewards");
      }
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ConfigError("trajectory dump line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace marlrr
