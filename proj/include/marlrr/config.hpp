#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "marlrr/trainer.hpp"

namespace marlrr {

/// A training config plus the sweep and budget axes built on top of it.
struct ExperimentSpec {
  TrainConfig base;
  std::vector<int> replay_ratios{1, 2, 4};
  std::vector<int> batch_sizes{32, 64, 128};
  std::vector<double> learning_rates{0.0005, 0.001, 0.002};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<long long> budget_updates{10000, 20000, 40000};
  std::vector<int> budget_episodes{5000, 10000};
  bool seed_from_file = false;

  std::size_t run_count() const {
    return replay_ratios.size() * batch_sizes.size() * learning_rates.size() * seeds.size();
  }
  void validate() const;
};

/// Parses `key = value` lines; `#` starts a comment, lists are comma-separated.
/// Unknown keys and malformed lines raise ConfigError naming the key or line.
/// Missing keys keep their defaults. The result is validated.
ExperimentSpec parse_experiment(std::istream& in, const std::string& source = "<config>");
ExperimentSpec load_experiment(const std::string& path);
TrainConfig load_config(const std::string& path);

/// Every key with its resolved value, in a form parse_experiment reads back.
void write_resolved(std::ostream& out, const ExperimentSpec& spec);
std::string resolved_text(const ExperimentSpec& spec);

/// Keys accepted by parse_experiment.
const std::vector<std::string>& config_keys();

/// Seed fallback: MARLRR_SEED when set and parseable.
std::optional<std::uint64_t> seed_from_environment();

}  // namespace marlrr
