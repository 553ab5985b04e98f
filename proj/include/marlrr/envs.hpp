#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "marlrr/rng.hpp"
#include "marlrr/tensor.hpp"

namespace marlrr {

/// Sizes of a Dec-POMDP as seen by the learner.
struct DecPomdpSpec {
  int n_agents = 1;
  int n_actions = 1;
  int obs_dim = 1;
  int state_dim = 1;
  int horizon = 1;
  double gamma = 0.99;

  void validate() const;
};

/// Joint view of the environment at one decision point.
struct EnvView {
  Vec state;
  Mat observations;  // [n_agents × obs_dim]
  Mat available;     // [n_agents × n_actions], 1 = available
};

struct StepOutcome {
  EnvView next;
  double reward = 0.0;
  bool terminated = false;
  bool won = false;
};

struct Transition {
  Vec state;
  Mat obs;
  std::vector<int> actions;
  double reward = 0.0;
  Vec next_state;
  Mat next_obs;
  bool terminated = false;
  Mat available;
  Mat next_available;
};

struct Trajectory {
  std::vector<Transition> transitions;
  bool won = false;
  std::uint64_t seed = 0;  // environment reset seed that reproduces this episode

  std::size_t length() const { return transitions.size(); }
  double total_reward() const;
};

/// Cooperative Dec-POMDP driven by joint actions.
///
/// `reset(seed)` reseeds the environment's own stream, so an episode is fully
/// determined by its seed and the joint action sequence.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const DecPomdpSpec& spec() const = 0;
  virtual EnvView reset(std::uint64_t seed) = 0;
  virtual StepOutcome step(const std::vector<int>& actions) = 0;
  virtual Vec observe(int agent) const = 0;
  virtual Vec global_state() const = 0;
  virtual Mat available_actions() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
  virtual bool terminated() const = 0;
  virtual int steps_taken() const = 0;
};

struct GridworldConfig {
  int grid_size = 7;
  int n_agents = 3;
  int n_prey = 2;
  int view_radius = 2;
  int horizon = 50;
  double capture_reward = 10.0;
  double step_penalty = 0.05;
  double gamma = 0.99;

  void validate() const;
};

/// Partially observable capture gridworld.
///
/// Actions: 0 up, 1 down, 2 left, 3 right, 4 stay. Agents move
/// simultaneously; moves off the grid become stay and agents may share cells.
/// A prey is captured when at least two agents sit orthogonally adjacent to it
/// after the agent move; surviving prey then step uniformly among in-bounds
/// cells not held by an agent or another live prey (stay is always legal).
class CaptureGridworld final : public Environment {
 public:
  static constexpr int kActions = 5;

  explicit CaptureGridworld(GridworldConfig config = {});

  const DecPomdpSpec& spec() const override { return spec_; }
  EnvView reset(std::uint64_t seed) override;
  StepOutcome step(const std::vector<int>& actions) override;
  Vec observe(int agent) const override;
  Vec global_state() const override;
  Mat available_actions() const override;
  std::unique_ptr<Environment> clone() const override;
  bool terminated() const override { return done_; }
  int steps_taken() const override { return steps_; }

  const GridworldConfig& config() const { return config_; }

  struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell&) const = default;
  };

  const std::vector<Cell>& agents() const { return agents_; }
  const std::vector<Cell>& prey() const { return prey_; }
  const std::vector<bool>& prey_alive() const { return alive_; }
  int prey_captured() const;

  /// Places entities directly; for tests that need a crafted layout.
  void set_layout(std::vector<Cell> agents, std::vector<Cell> prey, std::vector<bool> alive);

 private:
  bool in_bounds(Cell c) const;
  EnvView view() const;

  GridworldConfig config_;
  DecPomdpSpec spec_;
  Rng rng_;
  std::vector<Cell> agents_;
  std::vector<Cell> prey_;
  std::vector<bool> alive_;
  int steps_ = 0;
  bool done_ = true;
};

/// One-step cooperative matrix game for two agents.
///
/// Observation is the agent's one-hot id; the state is a single zero. When the
/// two action counts differ, the smaller agent's surplus actions are masked.
class MatrixGame final : public Environment {
 public:
  explicit MatrixGame(Mat payoff = default_payoff(), double gamma = 0.99);

  static Mat default_payoff();

  const DecPomdpSpec& spec() const override { return spec_; }
  EnvView reset(std::uint64_t seed) override;
  StepOutcome step(const std::vector<int>& actions) override;
  Vec observe(int agent) const override;
  Vec global_state() const override;
  Mat available_actions() const override;
  std::unique_ptr<Environment> clone() const override;
  bool terminated() const override { return done_; }
  int steps_taken() const override { return done_ ? 1 : 0; }

  const Mat& payoff() const { return payoff_; }

 private:
  Mat payoff_;
  DecPomdpSpec spec_;
  bool done_ = true;
};

/// Payoff file: first line holds the two action counts, then one
/// whitespace-separated row of decimals per action of agent 1.
Mat read_payoff(std::istream& in);
Mat load_payoff(const std::string& path);

/// Plays `actions` (one joint action per step) from reset(seed) and returns
/// the resulting trajectory. Used to replay logged episodes.
Trajectory replay_actions(Environment& env, std::uint64_t seed,
                          const std::vector<std::vector<int>>& actions);

}  // namespace marlrr
