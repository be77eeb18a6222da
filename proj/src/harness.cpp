#include "d2q/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <regex>
#include <sstream>

#include "d2q/checkpoint.hpp"
#include "d2q/csv.hpp"
#include "d2q/error.hpp"
#include "d2q/replay.hpp"

namespace d2q::harness {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Mean {
    double sum = 0.0;
    std::uint64_t n = 0;

    void add(double v) {
        if (std::isnan(v)) return;
        sum += v;
        ++n;
    }
    double value() const { return n == 0 ? kNaN : sum / static_cast<double>(n); }
};

struct IntervalStats {
    Mean q1, q2, corr, beta, actor;

    void add(const agent::TrainStats& s) {
        q1.add(s.q1_loss);
        q2.add(s.q2_loss);
        corr.add(s.corr_raw);
        beta.add(s.beta);
        if (s.actor_updated) actor.add(s.actor_objective);
    }
};

// Population mean and standard deviation, two-pass.
EvalResult mean_std(std::span<const double> values) {
    EvalResult r;
    if (values.empty()) return r;
    const double n = static_cast<double>(values.size());
    for (double v : values) r.mean += v;
    r.mean /= n;
    double ss = 0.0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / n);
    return r;
}

double parse_field(const std::string& field, const std::filesystem::path& path) {
    if (field == "na") return kNaN;
    try {
        std::size_t used = 0;
        const double v = std::stod(field, &used);
        if (used != field.size()) throw std::invalid_argument(field);
        return v;
    } catch (const std::exception&) {
        throw AlignmentError("metrics file " + path.string() + ": malformed value '" + field + "'");
    }
}

}  // namespace

void write_metrics_row(std::ostream& out, const MetricsRow& row) {
    out << row.step << ',' << format_number(row.eval_return_mean) << ',' << format_number(row.eval_return_std)
        << ',' << format_number(row.q1_loss) << ',' << format_number(row.q2_loss) << ','
        << format_number(row.corr_raw) << ',' << format_number(row.beta) << ','
        << format_number(row.actor_objective) << '\n';
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw AlignmentError("cannot open metrics file " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw AlignmentError("metrics file " + path.string() + " has an unexpected header");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream parts(line);
        std::string f;
        while (std::getline(parts, f, ',')) fields.push_back(f);
        if (fields.size() != 8) throw AlignmentError("metrics file " + path.string() + ": expected 8 columns");
        MetricsRow r;
        r.step = static_cast<std::uint64_t>(parse_field(fields[0], path));
        r.eval_return_mean = parse_field(fields[1], path);
        r.eval_return_std = parse_field(fields[2], path);
        r.q1_loss = parse_field(fields[3], path);
        r.q2_loss = parse_field(fields[4], path);
        r.corr_raw = parse_field(fields[5], path);
        r.beta = parse_field(fields[6], path);
        r.actor_objective = parse_field(fields[7], path);
        if (!rows.empty() && r.step <= rows.back().step)
            throw AlignmentError("metrics file " + path.string() + ": steps are not strictly increasing");
        rows.push_back(r);
    }
    return rows;
}

EvalResult evaluate(const Policy& policy, envs::Environment& env, std::size_t episodes, std::uint64_t seed) {
    if (episodes == 0) throw PreconditionError("evaluate: need at least one episode");
    std::vector<double> returns;
    returns.reserve(episodes);
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        std::vector<double> obs = env.reset(derive_seed(seed, 0, ep));
        double total = 0.0;
        for (;;) {
            envs::StepResult res = env.step(policy(obs));
            total += res.reward;
            obs = std::move(res.observation);
            if (res.done) break;
        }
        returns.push_back(total);
    }
    return mean_std(returns);
}

EvalResult evaluate(const agent::Agent& agent, envs::Environment& env, std::size_t episodes, std::uint64_t seed) {
    Rng unused(0);
    return evaluate([&](std::span<const double> obs) { return agent.select_action(obs, false, unused); }, env,
                    episodes, seed);
}

std::string run_stem(const RunConfig& config, std::uint64_t seed) {
    return config.env + "_" + std::string(agent::to_string(config.agent.kind)) + "_seed" + std::to_string(seed);
}

SeedOutcome train_seed(const RunConfig& config, std::uint64_t seed) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    const std::string stem = run_stem(config, seed);

    SeedOutcome outcome;
    outcome.seed = seed;
    outcome.metrics = config.out_dir / (stem + ".csv");
    outcome.checkpoint = config.out_dir / (stem + ".ckpt");

    auto env = envs::make_env(config.env);
    auto eval_env = envs::make_env(config.env);
    agent::Agent learner(config.agent, env->observation_size(), env->action_size(), env->max_action(),
                         derive_seed(seed, 100));
    replay::ReplayBuffer buffer(config.replay_capacity);
    Rng rng(derive_seed(seed, 200));
    const std::uint64_t eval_seed = derive_seed(seed, 400);

    std::ofstream csv(outcome.metrics, std::ios::binary);
    if (!csv) throw ConfigError("cannot write metrics file " + outcome.metrics.string());
    csv << kMetricsHeader << '\n';

    auto emit = [&](std::uint64_t step, const IntervalStats& stats) {
        const EvalResult ev = evaluate(learner, *eval_env, config.eval_episodes, eval_seed);
        MetricsRow row{step,
                       ev.mean,
                       ev.std,
                       stats.q1.value(),
                       stats.q2.value(),
                       stats.corr.value(),
                       stats.beta.value(),
                       stats.actor.value()};
        write_metrics_row(csv, row);
        csv.flush();
    };

    IntervalStats interval;
    emit(0, interval);

    std::uint64_t episode = 0;
    std::vector<double> obs = env->reset(derive_seed(seed, 300, episode));
    try {
        for (std::uint64_t t = 1; t <= config.total_steps; ++t) {
            std::vector<double> action;
            if (t <= config.warmup_steps) {
                action.resize(env->action_size());
                for (double& a : action) a = uniform(rng, -env->max_action(), env->max_action());
            } else {
                action = learner.select_action(obs, true, rng);
            }
            envs::StepResult res = env->step(action);
            buffer.push({obs, action, res.reward, res.done, res.observation});
            if (res.done) {
                ++episode;
                obs = env->reset(derive_seed(seed, 300, episode));
            } else {
                obs = std::move(res.observation);
            }
            if (t > config.warmup_steps && buffer.size() >= config.agent.batch_size)
                interval.add(learner.train_step(buffer, rng));
            if (t % config.eval_interval == 0) {
                emit(t, interval);
                interval = IntervalStats{};
            }
        }
    } catch (const DivergenceError& e) {
        outcome.diverged = true;
        outcome.error = e.what();
        std::ofstream err(config.out_dir / (stem + ".error"));
        err << e.what() << '\n';
    }
    outcome.clipped_actions = env->clipped_actions();
    if (!outcome.diverged) nn::write_checkpoint(outcome.checkpoint.string(), learner.named_networks());
    return outcome;
}

std::vector<std::filesystem::path> train(const RunConfig& config, std::ostream* log) {
    config.validate();
    std::vector<std::filesystem::path> files;
    for (std::uint64_t seed : config.seeds) {
        const SeedOutcome outcome = train_seed(config, seed);
        if (outcome.diverged) {
            if (log) *log << "seed " << seed << " diverged: " << outcome.error << '\n';
            continue;
        }
        if (log)
            *log << "seed " << seed << " -> " << outcome.metrics.string() << " (clipped actions: "
                 << outcome.clipped_actions << ")\n";
        files.push_back(outcome.metrics);
    }
    return files;
}

std::vector<double> window_average(std::span<const double> values, std::size_t window) {
    if (window == 0) throw ConfigError("window must be positive");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::size_t first = i + 1 >= window ? i + 1 - window : 0;
        double s = 0.0;
        for (std::size_t j = first; j <= i; ++j) s += values[j];
        out[i] = s / static_cast<double>(i + 1 - first);
    }
    return out;
}

Summary summarize(const std::vector<std::filesystem::path>& metrics_files, std::size_t window) {
    if (metrics_files.empty()) throw PreconditionError("summarize: no metrics files");
    if (window == 0) throw ConfigError("summarize: window must be positive");
    Summary summary;
    summary.window = window;
    summary.files = metrics_files;

    std::vector<std::uint64_t> grid;
    std::vector<std::vector<double>> curves;
    for (const auto& path : metrics_files) {
        const auto rows = read_metrics_csv(path);
        std::vector<std::uint64_t> steps;
        std::vector<double> returns;
        for (const auto& r : rows) {
            steps.push_back(r.step);
            returns.push_back(r.eval_return_mean);
        }
        if (curves.empty()) {
            grid = steps;
        } else if (steps != grid) {
            throw AlignmentError("summarize: " + path.string() + " uses a different step grid than " +
                                 metrics_files.front().string());
        }
        curves.push_back(window_average(returns, window));
    }

    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<double> at;
        for (const auto& c : curves) at.push_back(c[i]);
        const EvalResult ms = mean_std(at);
        summary.rows.push_back({grid[i], ms.mean, ms.std});
    }
    for (const auto& c : curves)
        summary.max_average_return.push_back(c.empty() ? kNaN : *std::max_element(c.begin(), c.end()));
    const EvalResult ms = mean_std(summary.max_average_return);
    summary.max_average_mean = ms.mean;
    summary.max_average_std = ms.std;
    return summary;
}

std::map<std::string, Summary> summarize_directory(const std::filesystem::path& dir, std::size_t window) {
    static const std::regex pattern(R"((.+)_seed(\d+)\.csv)");
    std::map<std::string, std::vector<std::pair<std::uint64_t, std::filesystem::path>>> groups;
    if (!std::filesystem::is_directory(dir)) throw PreconditionError("summarize: not a directory: " + dir.string());
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && std::regex_match(name, m, pattern))
            groups[m[1].str()].emplace_back(std::stoull(m[2].str()), entry.path());
    }
    if (groups.empty()) throw PreconditionError("summarize: no <stem>_seed<N>.csv files in " + dir.string());
    std::map<std::string, Summary> out;
    for (auto& [stem, files] : groups) {
        std::sort(files.begin(), files.end());
        std::vector<std::filesystem::path> paths;
        for (const auto& f : files) paths.push_back(f.second);
        out.emplace(stem, summarize(paths, window));
    }
    return out;
}

void write_summary_csv(std::ostream& out, const Summary& summary) {
    out << "step,return_mean,return_std\n";
    for (const auto& r : summary.rows)
        out << r.step << ',' << format_number(r.mean) << ',' << format_number(r.std) << '\n';
}

}  // namespace d2q::harness
