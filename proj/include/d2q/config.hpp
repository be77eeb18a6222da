#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "d2q/agent.hpp"

namespace d2q::harness {

struct RunConfig {
    std::string env = "pendulum";
    agent::AgentConfig agent;
    std::uint64_t total_steps = 200000;
    std::uint64_t eval_interval = 5000;
    std::size_t eval_episodes = 10;
    std::vector<std::uint64_t> seeds{0};
    std::uint64_t warmup_steps = 1000;
    std::size_t replay_capacity = 100000;
    std::filesystem::path out_dir = "runs";

    // Finite-MDP dimensions for env = mdp (convergence runs).
    std::size_t mdp_states = 5;
    std::size_t mdp_actions = 2;
    double mdp_gamma = 0.9;

    // Throws ConfigError when total_steps < eval_interval, seeds is empty, or
    // an agent hyperparameter is out of range.
    void validate() const;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

// Plain-text "key = value" lines; '#' starts a comment. Overrides are applied
// after the file. Unknown keys, malformed values and a missing file each raise
// ConfigError with a message naming the key (or path).
RunConfig parse_config(const std::filesystem::path& path, const Overrides& overrides = {});
RunConfig parse_config_text(std::string_view text, const Overrides& overrides = {});

// Apply one key to a config; throws ConfigError as above.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// Every key accepted by the parser.
const std::vector<std::string_view>& config_keys();

}  // namespace d2q::harness
