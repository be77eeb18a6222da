#include "d2q/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "d2q/error.hpp"

namespace d2q::harness {
namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void type_error(std::string_view key, std::string_view expected, std::string_view value) {
    throw ConfigError("config key '" + std::string(key) + "': expected " + std::string(expected) + ", got '" +
                      std::string(value) + "'");
}

double to_double(std::string_view key, std::string_view value) {
    double out = 0.0;
    const auto v = trim(value);
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size()) type_error(key, "a number", value);
    return out;
}

std::uint64_t to_uint(std::string_view key, std::string_view value) {
    std::uint64_t out = 0;
    const auto v = trim(value);
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size())
        type_error(key, "a non-negative integer", value);
    return out;
}

// "[1, 2, 3]" or "1, 2, 3" or "1 2 3".
std::vector<std::uint64_t> to_uint_list(std::string_view key, std::string_view value) {
    auto v = trim(value);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') type_error(key, "a list like [64, 64]", value);
        v = trim(v.substr(1, v.size() - 2));
    }
    std::vector<std::uint64_t> out;
    std::string token;
    std::istringstream in{std::string(v)};
    std::string piece;
    while (in >> piece) {
        std::istringstream parts(piece);
        while (std::getline(parts, token, ','))
            if (!trim(token).empty()) out.push_back(to_uint(key, token));
    }
    if (out.empty()) type_error(key, "a non-empty list of integers", value);
    return out;
}

using Setter = void (*)(RunConfig&, std::string_view key, std::string_view value);

struct KeySpec {
    std::string_view key;
    Setter set;
};

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs{
        {"env", [](RunConfig& c, std::string_view, std::string_view v) {
             const auto name = trim(v);
             if (name != "pendulum" && name != "pointmass" && name != "mdp")
                 throw ConfigError("config key 'env': unknown value '" + std::string(name) +
                                   "' (expected pendulum, pointmass or mdp)");
             c.env = std::string(name);
         }},
        {"agent", [](RunConfig& c, std::string_view, std::string_view v) {
             try {
                 c.agent.kind = agent::parse_agent_kind(trim(v));
             } catch (const ConfigError& e) {
                 throw ConfigError(std::string("config key 'agent': ") + e.what());
             }
         }},
        {"total_steps", [](RunConfig& c, std::string_view k, std::string_view v) { c.total_steps = to_uint(k, v); }},
        {"eval_interval", [](RunConfig& c, std::string_view k, std::string_view v) { c.eval_interval = to_uint(k, v); }},
        {"eval_episodes", [](RunConfig& c, std::string_view k, std::string_view v) { c.eval_episodes = to_uint(k, v); }},
        {"seeds", [](RunConfig& c, std::string_view k, std::string_view v) { c.seeds = to_uint_list(k, v); }},
        {"warmup_steps", [](RunConfig& c, std::string_view k, std::string_view v) { c.warmup_steps = to_uint(k, v); }},
        {"replay_capacity", [](RunConfig& c, std::string_view k, std::string_view v) { c.replay_capacity = to_uint(k, v); }},
        {"out_dir", [](RunConfig& c, std::string_view, std::string_view v) { c.out_dir = std::string(trim(v)); }},
        {"gamma", [](RunConfig& c, std::string_view k, std::string_view v) { c.agent.gamma = to_double(k, v); }},
        {"tau", [](RunConfig& c, std::string_view k, std::string_view v) { c.agent.tau = to_double(k, v); }},
        {"lambda", [](RunConfig& c, std::string_view k, std::string_view v) { c.agent.lambda = to_double(k, v); }},
        {"sigma_explore", [](RunConfig& c, std::string_view k, std::string_view v) { c.agent.sigma_explore = to_double(k, v); }},
        {"sigma_smooth", [](RunConfig& c, std::string_view k, std::string_view v) { c.agent.sigma_smooth = to_double(k, v); }},
        {"noise_clip", [](RunConfig& c, std::string_view k, std::string_view v) { c.agent.noise_clip = to_double(k, v); }},
        {"batch_size", [](RunConfig& c, std::string_view k, std::string_view v) { c.agent.batch_size = to_uint(k, v); }},
        {"hidden", [](RunConfig& c, std::string_view k, std::string_view v) {
             const auto list = to_uint_list(k, v);
             c.agent.hidden.assign(list.begin(), list.end());
         }},
        {"lr", [](RunConfig& c, std::string_view k, std::string_view v) { c.agent.lr = to_double(k, v); }},
        {"policy_delay", [](RunConfig& c, std::string_view k, std::string_view v) { c.agent.policy_delay = to_uint(k, v); }},
        {"mdp_states", [](RunConfig& c, std::string_view k, std::string_view v) { c.mdp_states = to_uint(k, v); }},
        {"mdp_actions", [](RunConfig& c, std::string_view k, std::string_view v) { c.mdp_actions = to_uint(k, v); }},
        {"mdp_gamma", [](RunConfig& c, std::string_view k, std::string_view v) { c.mdp_gamma = to_double(k, v); }},
    };
    return specs;
}

}  // namespace

const std::vector<std::string_view>& config_keys() {
    static const std::vector<std::string_view> keys = [] {
        std::vector<std::string_view> out;
        for (const auto& s : key_specs()) out.push_back(s.key);
        return out;
    }();
    return keys;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
    const auto k = trim(key);
    const auto& specs = key_specs();
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const KeySpec& s) { return s.key == k; });
    if (it == specs.end()) throw ConfigError("unknown config key '" + std::string(k) + "'");
    it->set(config, k, value);
}

void RunConfig::validate() const {
    if (seeds.empty()) throw ConfigError("config key 'seeds': at least one seed is required");
    if (eval_interval == 0) throw ConfigError("config key 'eval_interval': must be positive");
    if (total_steps < eval_interval)
        throw ConfigError("config key 'total_steps': must be at least eval_interval");
    if (eval_episodes == 0) throw ConfigError("config key 'eval_episodes': must be positive");
    if (replay_capacity == 0) throw ConfigError("config key 'replay_capacity': must be positive");
    if (mdp_states == 0 || mdp_actions == 0) throw ConfigError("config key 'mdp_states'/'mdp_actions': must be positive");
    if (!(mdp_gamma > 0.0 && mdp_gamma < 1.0)) throw ConfigError("config key 'mdp_gamma': must lie in (0, 1)");
    agent.validate();
}

RunConfig parse_config_text(std::string_view text, const Overrides& overrides) {
    RunConfig config;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view body = line;
        if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
        body = trim(body);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                              std::string(body) + "'");
        apply_setting(config, body.substr(0, eq), body.substr(eq + 1));
    }
    for (const auto& [key, value] : overrides) apply_setting(config, key, value);
    config.validate();
    return config;
}

RunConfig parse_config(const std::filesystem::path& path, const Overrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config_text(text.str(), overrides);
}

}  // namespace d2q::harness
