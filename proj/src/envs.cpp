#include "marlrr/envs.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace marlrr {

void DecPomdpSpec::validate() const {
  if (n_agents < 1 || n_actions < 1 || obs_dim < 1 || state_dim < 1 || horizon < 1) {
    throw ConfigError("Dec-POMDP counts must all be >= 1");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
}

double Trajectory::total_reward() const {
  double total = 0.0;
  for (const auto& t : transitions) total += t.reward;
  return total;
}

void GridworldConfig::validate() const {
  if (grid_size < 2) throw ConfigError("grid_size must be >= 2");
  if (n_agents < 1 || n_prey < 1) throw ConfigError("gridworld needs at least one agent and one prey");
  if (n_agents + n_prey > grid_size * grid_size) {
    throw ConfigError("gridworld has more entities than cells");
  }
  if (view_radius < 0) throw ConfigError("view_radius must be >= 0");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
}

CaptureGridworld::CaptureGridworld(GridworldConfig config) : config_(config) {
  config_.validate();
  const int window = 2 * config_.view_radius + 1;
  spec_.n_agents = config_.n_agents;
  spec_.n_actions = kActions;
  spec_.obs_dim = 3 * window * window + 2;
  spec_.state_dim = 2 * config_.n_agents + 3 * config_.n_prey;
  spec_.horizon = config_.horizon;
  spec_.gamma = config_.gamma;
}

bool CaptureGridworld::in_bounds(Cell c) const {
  return c.x >= 0 && c.y >= 0 && c.x < config_.grid_size && c.y < config_.grid_size;
}

EnvView CaptureGridworld::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  const int cells = config_.grid_size * config_.grid_size;
  const int entities = config_.n_agents + config_.n_prey;
  // Partial Fisher-Yates over cell indices gives distinct uniform placements.
  std::vector<int> order(static_cast<std::size_t>(cells));
  for (int i = 0; i < cells; ++i) order[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < entities; ++i) {
    const auto j = i + static_cast<int>(rng_.below(static_cast<std::uint64_t>(cells - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  auto cell_of = [&](int k) {
    const int idx = order[static_cast<std::size_t>(k)];
    return Cell{idx % config_.grid_size, idx / config_.grid_size};
  };
  agents_.clear();
  prey_.clear();
  for (int i = 0; i < config_.n_agents; ++i) agents_.push_back(cell_of(i));
  for (int i = 0; i < config_.n_prey; ++i) prey_.push_back(cell_of(config_.n_agents + i));
  alive_.assign(static_cast<std::size_t>(config_.n_prey), true);
  steps_ = 0;
  done_ = false;
  return view();
}

void CaptureGridworld::set_layout(std::vector<Cell> agents, std::vector<Cell> prey,
                                  std::vector<bool> alive) {
  if (static_cast<int>(agents.size()) != config_.n_agents ||
      static_cast<int>(prey.size()) != config_.n_prey || alive.size() != prey.size()) {
    throw DimensionError("set_layout: entity counts do not match the configuration");
  }
  for (const auto& c : agents)
    if (!in_bounds(c)) throw ContractViolation("set_layout: agent out of bounds");
  for (const auto& c : prey)
    if (!in_bounds(c)) throw ContractViolation("set_layout: prey out of bounds");
  agents_ = std::move(agents);
  prey_ = std::move(prey);
  alive_ = std::move(alive);
  steps_ = 0;
  done_ = false;
}

namespace {

constexpr int kDx[CaptureGridworld::kActions] = {0, 0, -1, 1, 0};
constexpr int kDy[CaptureGridworld::kActions] = {-1, 1, 0, 0, 0};

}  // namespace

StepOutcome CaptureGridworld::step(const std::vector<int>& actions) {
  if (done_) throw StateError("step called on a terminated episode");
  if (static_cast<int>(actions.size()) != config_.n_agents) {
    throw ContractViolation("step: expected " + std::to_string(config_.n_agents) + " actions");
  }
  for (int i = 0; i < config_.n_agents; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= kActions) {
      throw ContractViolation("step: action " + std::to_string(a) + " unavailable for agent " +
                              std::to_string(i));
    }
  }

  for (int i = 0; i < config_.n_agents; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    Cell next{agents_[static_cast<std::size_t>(i)].x + kDx[a],
              agents_[static_cast<std::size_t>(i)].y + kDy[a]};
    if (in_bounds(next)) agents_[static_cast<std::size_t>(i)] = next;
  }

  int captured = 0;
  for (std::size_t p = 0; p < prey_.size(); ++p) {
    if (!alive_[p]) continue;
    int adjacent = 0;
    for (const auto& ag : agents_) {
      if (std::abs(ag.x - prey_[p].x) + std::abs(ag.y - prey_[p].y) == 1) ++adjacent;
    }
    if (adjacent >= 2) {
      alive_[p] = false;
      ++captured;
    }
  }

  for (std::size_t p = 0; p < prey_.size(); ++p) {
    if (!alive_[p]) continue;
    std::vector<Cell> legal;
    for (int m = 0; m < kActions; ++m) {
      Cell next{prey_[p].x + kDx[m], prey_[p].y + kDy[m]};
      if (!in_bounds(next)) continue;
      if (m != 4) {
        bool blocked = std::find(agents_.begin(), agents_.end(), next) != agents_.end();
        for (std::size_t q = 0; q < prey_.size() && !blocked; ++q) {
          blocked = q != p && alive_[q] && prey_[q] == next;
        }
        if (blocked) continue;
      }
      legal.push_back(next);
    }
    prey_[p] = legal[static_cast<std::size_t>(rng_.below(legal.size()))];
  }

  ++steps_;
  StepOutcome out;
  out.reward = config_.capture_reward * captured - config_.step_penalty;
  out.won = std::none_of(alive_.begin(), alive_.end(), [](bool a) { return a; });
  out.terminated = out.won || steps_ >= config_.horizon;
  done_ = out.terminated;
  out.next = view();
  return out;
}

Vec CaptureGridworld::observe(int agent) const {
  if (agent < 0 || agent >= config_.n_agents) throw ContractViolation("observe: bad agent index");
  const int r = config_.view_radius;
  const int window = 2 * r + 1;
  const int plane = window * window;
  Vec obs = Vec::Zero(spec_.obs_dim);
  const Cell self = agents_[static_cast<std::size_t>(agent)];
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const Cell c{self.x + dx, self.y + dy};
      const int k = (dy + r) * window + (dx + r);
      if (!in_bounds(c)) {
        obs[2 * plane + k] = 1.0;
        continue;
      }
      for (int j = 0; j < config_.n_agents; ++j) {
        if (j != agent && agents_[static_cast<std::size_t>(j)] == c) obs[k] = 1.0;
      }
      for (std::size_t p = 0; p < prey_.size(); ++p) {
        if (alive_[p] && prey_[p] == c) obs[plane + k] = 1.0;
      }
    }
  }
  const double scale = 1.0 / static_cast<double>(config_.grid_size - 1);
  obs[3 * plane] = self.x * scale;
  obs[3 * plane + 1] = self.y * scale;
  return obs;
}

Vec CaptureGridworld::global_state() const {
  Vec s(spec_.state_dim);
  const double scale = 1.0 / static_cast<double>(config_.grid_size - 1);
  Eigen::Index k = 0;
  for (const auto& a : agents_) {
    s[k++] = a.x * scale;
    s[k++] = a.y * scale;
  }
  for (std::size_t p = 0; p < prey_.size(); ++p) {
    s[k++] = prey_[p].x * scale;
    s[k++] = prey_[p].y * scale;
    s[k++] = alive_[p] ? 1.0 : 0.0;
  }
  return s;
}

Mat CaptureGridworld::available_actions() const {
  return Mat::Ones(config_.n_agents, kActions);
}

std::unique_ptr<Environment> CaptureGridworld::clone() const {
  return std::make_unique<CaptureGridworld>(*this);
}

int CaptureGridworld::prey_captured() const {
  return static_cast<int>(std::count(alive_.begin(), alive_.end(), false));
}

EnvView CaptureGridworld::view() const {
  EnvView v;
  v.state = global_state();
  v.observations.resize(config_.n_agents, spec_.obs_dim);
  for (int i = 0; i < config_.n_agents; ++i) v.observations.row(i) = observe(i).transpose();
  v.available = available_actions();
  return v;
}

MatrixGame::MatrixGame(Mat payoff, double gamma) : payoff_(std::move(payoff)) {
  if (payoff_.rows() < 1 || payoff_.cols() < 1) throw ConfigError("payoff matrix must be non-empty");
  if (!payoff_.allFinite()) throw ConfigError("payoff matrix has non-finite entries");
  spec_.n_agents = 2;
  spec_.n_actions = static_cast<int>(std::max(payoff_.rows(), payoff_.cols()));
  spec_.obs_dim = 2;
  spec_.state_dim = 1;
  spec_.horizon = 1;
  spec_.gamma = gamma;
  spec_.validate();
}

Mat MatrixGame::default_payoff() {
  Mat p(2, 2);
  p << 1.0, 0.0, 0.0, 1.0;
  return p;
}

EnvView MatrixGame::reset(std::uint64_t) {
  done_ = false;
  return {global_state(), (Mat(2, 2) << 1.0, 0.0, 0.0, 1.0).finished(), available_actions()};
}

StepOutcome MatrixGame::step(const std::vector<int>& actions) {
  if (done_) throw StateError("step called on a terminated episode");
  if (actions.size() != 2) throw ContractViolation("matrix game expects 2 actions");
  const Mat avail = available_actions();
  for (int i = 0; i < 2; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= spec_.n_actions || avail(i, a) == 0.0) {
      throw ContractViolation("step: action " + std::to_string(a) + " unavailable for agent " +
                              std::to_string(i));
    }
  }
  done_ = true;
  StepOutcome out;
  out.reward = payoff_(actions[0], actions[1]);
  out.terminated = true;
  out.won = out.reward > 0.0;
  out.next = {global_state(), (Mat(2, 2) << 1.0, 0.0, 0.0, 1.0).finished(), avail};
  return out;
}

Vec MatrixGame::observe(int agent) const {
  if (agent < 0 || agent > 1) throw ContractViolation("observe: bad agent index");
  Vec v = Vec::Zero(2);
  v[agent] = 1.0;
  return v;
}

Vec MatrixGame::global_state() const { return Vec::Zero(1); }

Mat MatrixGame::available_actions() const {
  Mat m = Mat::Zero(2, spec_.n_actions);
  m.row(0).head(payoff_.rows()).setOnes();
  m.row(1).head(payoff_.cols()).setOnes();
  return m;
}

std::unique_ptr<Environment> MatrixGame::clone() const { return std::make_unique<MatrixGame>(*this); }

Mat read_payoff(std::istream& in) {
  std::string line;
  int line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ConfigError("payoff file: missing action-count line");
  std::istringstream header(line);
  long rows = 0;
  long cols = 0;
  std::string extra;
  if (!(header >> rows >> cols) || (header >> extra) || rows < 1 || cols < 1) {
    throw ConfigError("payoff file line " + std::to_string(line_no) +
                      ": expected two positive integers");
  }
  Mat payoff(rows, cols);
  for (long r = 0; r < rows; ++r) {
    if (!next_line()) throw ConfigError("payoff file: expected " + std::to_string(rows) + " rows");
    std::istringstream row(line);
    for (long c = 0; c < cols; ++c) {
      if (!(row >> payoff(r, c))) {
        throw ConfigError("payoff file line " + std::to_string(line_no) + ": expected " +
                          std::to_string(cols) + " decimals");
      }
    }
    if (row >> extra) {
      throw ConfigError("payoff file line " + std::to_string(line_no) + ": too many values");
    }
  }
  if (next_line()) throw ConfigError("payoff file line " + std::to_string(line_no) + ": trailing data");
  return payoff;
}

Mat load_payoff(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open payoff file '" + path + "'");
  return read_payoff(in);
}

Trajectory replay_actions(Environment& env, std::uint64_t seed,
                          const std::vector<std::vector<int>>& actions) {
  Trajectory traj;
  traj.seed = seed;
  EnvView view = env.reset(seed);
  for (const auto& joint : actions) {
    StepOutcome out = env.step(joint);
    Transition t;
    t.state = view.state;
    t.obs = view.observations;
    t.available = view.available;
    t.actions = joint;
    t.reward = out.reward;
    t.terminated = out.terminated;
    t.next_state = out.next.state;
    t.next_obs = out.next.observations;
    t.next_available = out.next.available;
    traj.transitions.push_back(std::move(t));
    traj.won = out.won;
    view = std::move(out.next);
    if (out.terminated) break;
  }
  return traj;
}

}  // namespace marlrr
