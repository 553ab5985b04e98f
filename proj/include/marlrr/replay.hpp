#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "marlrr/envs.hpp"
#include "marlrr/rng.hpp"
#include "marlrr/tensor.hpp"

namespace marlrr {

/// Padded, masked batch of episodes. Every tensor is batch-major.
///
/// Time slot t < length holds transition t; slot `length` of the
/// state/observation/availability tensors holds the final next-state view so
/// bootstrap targets can read it. Everything past that is zero padding, and
/// `valid` marks the real transitions with a 1-prefix per episode.
struct EpisodeBatch {
  int batch_size = 0;
  int max_length = 0;  // T, the padded transition count
  int n_agents = 0;
  int n_actions = 0;
  int obs_dim = 0;
  int state_dim = 0;

  Tensor states;      // [B, T+1, state_dim]
  Tensor obs;         // [B, T+1, n, obs_dim]
  Tensor available;   // [B, T+1, n, A]
  std::vector<int> actions;  // [B, T, n], 0 in padding
  Tensor rewards;     // [B, T]
  Tensor terminated;  // [B, T]
  Tensor valid;       // [B, T]
  std::vector<int> lengths;
  std::vector<std::size_t> source_slots;  // buffer positions the episodes came from

  int action(int b, int t, int agent) const;

  /// Rows ordered (episode, agent); shapes [B·n × obs_dim], [B × state_dim], [B·n × A].
  Mat obs_at(int t) const;
  Mat states_at(int t) const;
  Mat available_at(int t) const;
  /// Actions at slot t flattened as (episode, agent); t must be < T.
  std::vector<int> actions_at(int t) const;
  /// One-hot of the action taken at t−1, zeros at t = 0: [B·n × A].
  Mat last_action_one_hot(int t) const;

  /// The same views restricted to `episodes`, in the given order.
  Mat obs_at(int t, const std::vector<int>& episodes) const;
  Mat states_at(int t, const std::vector<int>& episodes) const;
  Mat available_at(int t, const std::vector<int>& episodes) const;
  std::vector<int> actions_at(int t, const std::vector<int>& episodes) const;
  Mat last_action_one_hot(int t, const std::vector<int>& episodes) const;

  /// 0, 1, ..., B−1.
  std::vector<int> all_episodes() const;
  /// [T·B × 1] column in (time, episode) order.
  Mat column_time_major(const Tensor& bt) const;

  double valid_count() const { return valid.data().sum(); }
};

/// Builds a batch from explicit episodes (shared by sampling and tests).
EpisodeBatch make_batch(const std::vector<const Trajectory*>& episodes, const DecPomdpSpec& spec);

/// FIFO episode buffer with uniform batch sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);

  void push(Trajectory trajectory);
  /// Uniform without replacement inside one batch.
  EpisodeBatch sample(std::size_t batch_size, Rng& rng, const DecPomdpSpec& spec) const;

  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  bool ready(std::size_t batch_size) const { return storage_.size() >= batch_size; }
  const Trajectory& at(std::size_t i) const { return storage_.at(i); }

 private:
  std::size_t capacity_;
  std::deque<Trajectory> storage_;
  std::uint64_t inserted_ = 0;
};

/// Line-delimited trajectory dump: one JSON object per episode with seed,
/// length, won, actions (per step) and rewards (per step).
void write_trajectory_record(std::ostream& out, const Trajectory& trajectory);

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  std::size_t length = 0;
  bool won = false;
  std::vector<std::vector<int>> actions;
  std::vector<double> rewards;
};

std::vector<TrajectoryRecord> read_trajectory_dump(std::istream& in);

}  // namespace marlrr
