#include "marlrr/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "marlrr/format.hpp"

namespace marlrr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct BadValue {
  std::string what;
};

template <typename T>
T parse_number(const std::string& text) {
  const std::string s = trim(text);
  T value{};
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (s.empty() || ec != std::errc() || ptr != last) throw BadValue{"'" + s + "' is not a valid number"};
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(item));
  if (out.empty()) throw BadValue{"empty list"};
  return out;
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += decimal(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

struct Key {
  std::function<void(ExperimentSpec&, const std::string&)> set;
  std::function<std::string(const ExperimentSpec&)> get;
};

template <typename T>
Key number_key(T TrainConfig::*field) {
  return {[field](ExperimentSpec& e, const std::string& v) { e.base.*field = parse_number<T>(v); },
          [field](const ExperimentSpec& e) {
            if constexpr (std::is_floating_point_v<T>) {
              return decimal(e.base.*field);
            } else {
              return std::to_string(e.base.*field);
            }
          }};
}

template <typename T>
Key grid_key(T GridworldConfig::*field) {
  return {[field](ExperimentSpec& e, const std::string& v) { e.base.grid.*field = parse_number<T>(v); },
          [field](const ExperimentSpec& e) {
            if constexpr (std::is_floating_point_v<T>) {
              return decimal(e.base.grid.*field);
            } else {
              return std::to_string(e.base.grid.*field);
            }
          }};
}

template <typename T>
Key list_key(std::vector<T> ExperimentSpec::*field) {
  return {[field](ExperimentSpec& e, const std::string& v) { e.*field = parse_list<T>(v); },
          [field](const ExperimentSpec& e) { return join(e.*field); }};
}

const std::map<std::string, Key>& key_table() {
  static const std::map<std::string, Key> table = [] {
    std::map<std::string, Key> t;
    t["replay_ratio"] = number_key(&TrainConfig::replay_ratio);
    t["alpha_theta"] = number_key(&TrainConfig::alpha_theta);
    t["alpha_phi"] = number_key(&TrainConfig::alpha_phi);
    t["eta_theta"] = number_key(&TrainConfig::eta_theta);
    t["eta_phi"] = number_key(&TrainConfig::eta_phi);
    t["gamma"] = number_key(&TrainConfig::gamma);
    t["batch_size"] = number_key(&TrainConfig::batch_size);
    t["buffer_capacity"] = number_key(&TrainConfig::buffer_capacity);
    t["total_episodes"] = number_key(&TrainConfig::total_episodes);
    t["eval_every"] = number_key(&TrainConfig::eval_every);
    t["eval_episodes"] = number_key(&TrainConfig::eval_episodes);
    t["reset_every"] = number_key(&TrainConfig::reset_every);
    t["hidden_dim"] = number_key(&TrainConfig::hidden_dim);
    t["qmix_embed"] = number_key(&TrainConfig::qmix_embed);
    t["dnr_rho"] = number_key(&TrainConfig::dnr_rho);
    t["probe_batch"] = number_key(&TrainConfig::probe_batch);
    t["max_updates"] = number_key(&TrainConfig::max_updates);
    t["win_threshold"] = number_key(&TrainConfig::win_threshold);
    t["seed"] = {[](ExperimentSpec& e, const std::string& v) {
                   e.base.seed = parse_number<std::uint64_t>(v);
                   e.seed_from_file = true;
                 },
                 [](const ExperimentSpec& e) { return std::to_string(e.base.seed); }};
    t["epsilon_start"] = {[](ExperimentSpec& e, const std::string& v) { e.base.epsilon.start = parse_number<double>(v); },
                          [](const ExperimentSpec& e) { return decimal(e.base.epsilon.start); }};
    t["epsilon_end"] = {[](ExperimentSpec& e, const std::string& v) { e.base.epsilon.end = parse_number<double>(v); },
                        [](const ExperimentSpec& e) { return decimal(e.base.epsilon.end); }};
    t["epsilon_decay_steps"] = {
        [](ExperimentSpec& e, const std::string& v) { e.base.epsilon.decay_steps = parse_number<double>(v); },
        [](const ExperimentSpec& e) { return decimal(e.base.epsilon.decay_steps); }};
    t["mixer"] = {[](ExperimentSpec& e, const std::string& v) { e.base.mixer = parse_mixer_kind(trim(v)); },
                  [](const ExperimentSpec& e) { return to_string(e.base.mixer); }};
    t["env"] = {[](ExperimentSpec& e, const std::string& v) {
                  const std::string s = trim(v);
                  if (s == "gridworld") e.base.env = EnvKind::Gridworld;
                  else if (s == "matrix") e.base.env = EnvKind::Matrix;
                  else throw BadValue{"expected gridworld or matrix"};
                },
                [](const ExperimentSpec& e) { return to_string(e.base.env); }};
    t["agent"] = {[](ExperimentSpec& e, const std::string& v) {
                    const std::string s = trim(v);
                    if (s == "gru") e.base.agent_kind = AgentKind::Recurrent;
                    else if (s == "ff") e.base.agent_kind = AgentKind::Feedforward;
                    else throw BadValue{"expected gru or ff"};
                  },
                  [](const ExperimentSpec& e) { return to_string(e.base.agent_kind); }};
    t["reset_scope"] = {[](ExperimentSpec& e, const std::string& v) {
                          const std::string s = trim(v);
                          if (s == "head") e.base.reset_scope = ResetScope::Head;
                          else if (s == "all") e.base.reset_scope = ResetScope::All;
                          else throw BadValue{"expected head or all"};
                        },
                        [](const ExperimentSpec& e) { return to_string(e.base.reset_scope); }};
    t["payoff_file"] = {[](ExperimentSpec& e, const std::string& v) { e.base.payoff_file = trim(v); },
                        [](const ExperimentSpec& e) { return e.base.payoff_file; }};
    t["grid_size"] = grid_key(&GridworldConfig::grid_size);
    t["n_agents"] = grid_key(&GridworldConfig::n_agents);
    t["n_prey"] = grid_key(&GridworldConfig::n_prey);
    t["view_radius"] = grid_key(&GridworldConfig::view_radius);
    t["horizon"] = grid_key(&GridworldConfig::horizon);
    t["capture_reward"] = grid_key(&GridworldConfig::capture_reward);
    t["step_penalty"] = grid_key(&GridworldConfig::step_penalty);
    t["sweep_replay_ratio"] = list_key(&ExperimentSpec::replay_ratios);
    t["sweep_batch_size"] = list_key(&ExperimentSpec::batch_sizes);
    t["sweep_learning_rate"] = list_key(&ExperimentSpec::learning_rates);
    t["seeds"] = list_key(&ExperimentSpec::seeds);
    t["budget_updates"] = list_key(&ExperimentSpec::budget_updates);
    t["budget_episodes"] = list_key(&ExperimentSpec::budget_episodes);
    return t;
  }();
  return table;
}

}  // namespace

void ExperimentSpec::validate() const {
  base.validate();
  if (replay_ratios.empty() || batch_sizes.empty() || learning_rates.empty() || seeds.empty()) {
    throw ConfigError("sweep axes must be non-empty");
  }
  for (int n : replay_ratios)
    if (n < 1) throw ConfigError("sweep_replay_ratio values must be >= 1");
  for (int b : batch_sizes)
    if (b < 1) throw ConfigError("sweep_batch_size values must be >= 1");
  for (double lr : learning_rates)
    if (!(lr >= 0.0)) throw ConfigError("sweep_learning_rate values must be >= 0");
  for (long long u : budget_updates)
    if (u <= 0) throw ConfigError("budget_updates values must be positive");
  for (int e : budget_episodes)
    if (e <= 0) throw ConfigError("budget_episodes values must be positive");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, key] : key_table()) k.push_back(name);
    return k;
  }();
  return keys;
}

ExperimentSpec parse_experiment(std::istream& in, const std::string& source) {
  ExperimentSpec spec;
  const auto& table = key_table();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(content.substr(0, eq));
    const std::string value = trim(content.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": missing key");
    const auto it = table.find(key);
    if (it == table.end()) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    try {
      it->second.set(spec, value);
    } catch (const BadValue& bad) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + key + ": " + bad.what);
    }
  }
  spec.validate();
  return spec;
}

ExperimentSpec load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_experiment(in, path);
}

TrainConfig load_config(const std::string& path) { return load_experiment(path).base; }

void write_resolved(std::ostream& out, const ExperimentSpec& spec) {
  out << "# resolved configuration\n";
  for (const auto& [name, key] : key_table()) out << name << " = " << key.get(spec) << '\n';
}

std::string resolved_text(const ExperimentSpec& spec) {
  std::ostringstream out;
  write_resolved(out, spec);
  return out.str();
}

std::optional<std::uint64_t> seed_from_environment() {
  const char* raw = std::getenv("MARLRR_SEED");
  if (!raw) return std::nullopt;
  try {
    return parse_number<std::uint64_t>(raw);
  } catch (const BadValue&) {
    throw ConfigError("MARLRR_SEED: '" + std::string(raw) + "' is not a valid seed");
  }
}

}  // namespace marlrr
