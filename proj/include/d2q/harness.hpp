#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "d2q/agent.hpp"
#include "d2q/config.hpp"
#include "d2q/envs.hpp"

namespace d2q::harness {

inline constexpr std::string_view kMetricsHeader =
    "step,eval_return_mean,eval_return_std,q1_loss,q2_loss,corr_raw,beta,actor_objective";

// One evaluation record. Loss-type fields are NaN ("na" in CSV) when no
// gradient step happened since the previous row or the agent has no such quantity.
struct MetricsRow {
    std::uint64_t step = 0;
    double eval_return_mean = 0.0;
    double eval_return_std = 0.0;
    double q1_loss = 0.0;
    double q2_loss = 0.0;
    double corr_raw = 0.0;
    double beta = 0.0;
    double actor_objective = 0.0;
};

void write_metrics_row(std::ostream& out, const MetricsRow& row);
// Validates the header and that steps strictly increase; throws AlignmentError otherwise.
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct EvalResult {
    double mean = 0.0;
    double std = 0.0;  // population
};

using Policy = std::function<std::vector<double>(std::span<const double> observation)>;

// Undiscounted episodic returns over full episodes; episode i resets with derive_seed(seed, 0, i).
EvalResult evaluate(const Policy& policy, envs::Environment& env, std::size_t episodes, std::uint64_t seed);
// Noise-free actions from the agent's actor.
EvalResult evaluate(const agent::Agent& agent, envs::Environment& env, std::size_t episodes, std::uint64_t seed);

struct SeedOutcome {
    std::uint64_t seed = 0;
    std::filesystem::path metrics;
    std::filesystem::path checkpoint;
    bool diverged = false;
    std::string error;
    std::uint64_t clipped_actions = 0;
};

// File stem shared by a seed's outputs: <env>_<agent>_seed<N>.
std::string run_stem(const RunConfig& config, std::uint64_t seed);

// Trains one seed and writes its metrics CSV (and final checkpoint) under config.out_dir.
// A DivergenceError ends the seed early: the outcome is marked diverged, a
// <stem>.error file is written, and the exception is not propagated.
SeedOutcome train_seed(const RunConfig& config, std::uint64_t seed);

// All seeds in order. Returns the metrics files of seeds that completed; diverged
// seeds are reported on `log` (when given) and in their .error files.
std::vector<std::filesystem::path> train(const RunConfig& config, std::ostream* log = nullptr);

struct SummaryRow {
    std::uint64_t step = 0;
    double mean = 0.0;  // across seeds of the window-averaged return
    double std = 0.0;   // population std across seeds
};

struct Summary {
    std::size_t window = 10;
    std::vector<std::filesystem::path> files;
    std::vector<SummaryRow> rows;
    std::vector<double> max_average_return;  // per seed, max over the windowed curve
    double max_average_mean = 0.0;
    double max_average_std = 0.0;
};

// Trailing moving average; the first window-1 points average what is available.
std::vector<double> window_average(std::span<const double> values, std::size_t window);

// Throws AlignmentError when the files do not share one step grid, ConfigError on window 0.
Summary summarize(const std::vector<std::filesystem::path>& metrics_files, std::size_t window);
// Groups <stem>_seed<N>.csv files in a directory by stem and summarizes each group.
std::map<std::string, Summary> summarize_directory(const std::filesystem::path& dir, std::size_t window);

void write_summary_csv(std::ostream& out, const Summary& summary);

}  // namespace d2q::harness
