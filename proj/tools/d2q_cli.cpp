// Command-line front end: train / summarize / convergence / bias.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "d2q/config.hpp"
#include "d2q/csv.hpp"
#include "d2q/envs.hpp"
#include "d2q/error.hpp"
#include "d2q/harness.hpp"
#include "d2q/platform.hpp"
#include "d2q/simd/kernels.hpp"
#include "d2q/tabular.hpp"

namespace {

using namespace d2q;

void select_kernels(const std::string& name) {
    if (name == "scalar") {
        simd::select(simd::Isa::Scalar);
    } else if (name == "avx2") {
        if (!simd::select(simd::Isa::Avx2)) throw ConfigError("AVX2 kernels are not available on this machine");
    } else if (name != "auto") {
        throw ConfigError("--kernels must be auto, scalar or avx2");
    }
}

// Write to a file when a path is given, else stdout.
template <typename Fn>
void with_output(const std::string& path, Fn&& write) {
    if (path.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    write(out);
}

}  // namespace

int main(int argc, char** argv) {
    d2q::tune_allocator();
    CLI::App app{"Decorrelated double Q-learning experiments"};
    app.require_subcommand(1);
    std::string kernels = "auto";
    app.add_option("--kernels", kernels, "Inner-loop kernels: auto, scalar or avx2")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "Train agents and write per-seed metrics CSVs");
    std::string config_path;
    std::optional<std::string> agent_kind, env_name, out_dir;
    std::optional<std::uint64_t> steps;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> sets;
    train->add_option("--config", config_path, "Config file of 'key = value' lines");
    train->add_option("--agent", agent_kind, "d2q, td3 or ddpg");
    train->add_option("--env", env_name, "pendulum or pointmass");
    train->add_option("--steps", steps, "Total environment steps");
    train->add_option("--seed", seeds, "One or more seeds")->expected(1, -1);
    train->add_option("--out", out_dir, "Output directory");
    train->add_option("--set", sets, "Extra key=value overrides")->expected(1, -1);

    // summarize
    auto* summarize = app.add_subcommand("summarize", "Window-average and aggregate metrics CSVs");
    std::size_t window = 10;
    std::string summary_dir;
    summarize->add_option("--window", window, "Moving-average window over evaluation points")->capture_default_str();
    summarize->add_option("dir", summary_dir, "Directory of <stem>_seed<N>.csv files")->required();

    // convergence
    auto* convergence = app.add_subcommand("convergence", "Tabular D2Q on a random finite MDP vs. value iteration");
    std::string conv_config;
    std::optional<std::size_t> conv_states, conv_actions;
    std::optional<double> conv_gamma;
    std::uint64_t conv_steps = 500000, conv_seed = 0;
    std::string conv_out;
    convergence->add_option("--config", conv_config, "Config file providing mdp_states/mdp_actions/mdp_gamma");
    convergence->add_option("--states", conv_states, "Number of states (default 5)");
    convergence->add_option("--actions", conv_actions, "Number of actions (default 2)");
    convergence->add_option("--gamma", conv_gamma, "Discount (default 0.9)");
    convergence->add_option("--steps", conv_steps, "Tabular updates")->capture_default_str();
    convergence->add_option("--seed", conv_seed, "Seed for the MDP and the learner")->capture_default_str();
    convergence->add_option("--out", conv_out, "CSV output path (default stdout)");

    // bias
    auto* bias = app.add_subcommand("bias", "Overestimation bias of max over noisy estimates");
    std::size_t bias_states = 1, bias_actions = 2;
    double bias_noise = 1.0;
    std::uint64_t bias_trials = 100000, bias_seed = 0;
    std::string bias_out;
    bias->add_option("--states", bias_states, "Number of states")->capture_default_str();
    bias->add_option("--actions", bias_actions, "Number of actions")->capture_default_str();
    bias->add_option("--noise", bias_noise, "Noise standard deviation")->capture_default_str();
    bias->add_option("--trials", bias_trials, "Number of trials (>= 1000)")->capture_default_str();
    bias->add_option("--seed", bias_seed, "Seed")->capture_default_str();
    bias->add_option("--out", bias_out, "CSV output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        select_kernels(kernels);

        if (*train) {
            harness::Overrides overrides;
            if (agent_kind) overrides.emplace_back("agent", *agent_kind);
            if (env_name) overrides.emplace_back("env", *env_name);
            if (steps) overrides.emplace_back("total_steps", std::to_string(*steps));
            if (out_dir) overrides.emplace_back("out_dir", *out_dir);
            if (!seeds.empty()) {
                std::ostringstream list;
                for (std::size_t i = 0; i < seeds.size(); ++i) list << (i ? "," : "") << seeds[i];
                overrides.emplace_back("seeds", list.str());
            }
            for (const auto& s : sets) {
                const auto eq = s.find('=');
                if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
                overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
            }
            const harness::RunConfig config = config_path.empty() ? harness::parse_config_text("", overrides)
                                                                  : harness::parse_config(config_path, overrides);
            std::cerr << "kernels: " << simd::active().name << '\n';
            const auto files = harness::train(config, &std::cout);
            return files.size() == config.seeds.size() ? 0 : 3;
        }

        if (*summarize) {
            for (const auto& [stem, summary] : harness::summarize_directory(summary_dir, window)) {
                const auto path = std::filesystem::path(summary_dir) / (stem + "_summary.csv");
                std::ofstream out(path, std::ios::binary);
                harness::write_summary_csv(out, summary);
                std::cout << stem << ": " << summary.files.size() << " seed(s), window " << summary.window
                          << ", max average return " << format_number(summary.max_average_mean) << " +- "
                          << format_number(summary.max_average_std) << " -> " << path.string() << '\n';
            }
            return 0;
        }

        if (*convergence) {
            harness::RunConfig base = conv_config.empty() ? harness::RunConfig{} : harness::parse_config(conv_config);
            const std::size_t S = conv_states.value_or(base.mdp_states);
            const std::size_t A = conv_actions.value_or(base.mdp_actions);
            const double gamma = conv_gamma.value_or(base.mdp_gamma);
            const auto mdp = envs::generate_mdp(conv_seed, S, A, gamma);
            const auto trace = tabular::run_convergence(mdp, conv_steps, conv_seed);
            with_output(conv_out, [&](std::ostream& out) { tabular::write_convergence_csv(out, trace); });
            std::cerr << "final ||Q - Q*||_inf = " << format_number(trace.final_q_error())
                      << ", final max|q1 - q2| = " << format_number(trace.final_delta()) << '\n';
            return 0;
        }

        if (*bias) {
            const auto report = tabular::bias_experiment(bias_states, bias_actions, bias_noise, bias_trials, bias_seed);
            with_output(bias_out, [&](std::ostream& out) { tabular::write_bias_csv(out, report); });
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
