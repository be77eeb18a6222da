#include "d2q/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "d2q/agent.hpp"
#include "d2q/csv.hpp"
#include "d2q/error.hpp"

namespace d2q::tabular {

void PairMoments::add(double x1, double x2) {
    ++n_;
    const double w = (window_ == 0 || n_ <= window_) ? 1.0 / static_cast<double>(n_)
                                                     : 1.0 / static_cast<double>(window_);
    const double d1 = x1 - mean1_;
    const double d2 = x2 - mean2_;
    mean1_ += w * d1;
    mean2_ += w * d2;
    var1_ = (1.0 - w) * (var1_ + w * d1 * d1);
    cov_ = (1.0 - w) * (cov_ + w * d1 * d2);
}

double PairMoments::beta() const {
    if (n_ < 2 || !(var1_ > 0.0)) return 0.0;
    return agent::clamp_beta(cov_ / var1_);
}

TabularD2Q::TabularD2Q(std::size_t n_states, std::size_t n_actions, double gamma, std::uint64_t seed,
                       TabularOptions options)
    : n_states_(n_states),
      n_actions_(n_actions),
      gamma_(gamma),
      options_(options),
      q1_(n_states, n_actions),
      q2_(n_states, n_actions),
      visits_(n_states * n_actions, 0),
      moments_(n_states * n_actions, PairMoments(options.moment_window)) {
    if (n_states == 0 || n_actions == 0) throw ConfigError("tabular: need at least one state and action");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("tabular: gamma must lie in (0, 1)");
    if (!(options.lr_exponent > 0.5 && options.lr_exponent <= 1.0))
        throw ConfigError("tabular: learning-rate exponent must lie in (0.5, 1]");
    if (!(options.init_scale >= 0.0)) throw ConfigError("tabular: init_scale must be >= 0");
    Rng rng(seed);
    for (std::size_t i = 0; i < q1_.size(); ++i) {
        q1_.data()[i] = options.init_scale > 0.0 ? uniform(rng, -options.init_scale, options.init_scale) : 0.0;
        q2_.data()[i] = options.init_scale > 0.0 ? uniform(rng, -options.init_scale, options.init_scale) : 0.0;
    }
}

void TabularD2Q::set_values(std::size_t s, std::size_t a, double q1, double q2) {
    q1_(s, a) = q1;
    q2_(s, a) = q2;
}

double TabularD2Q::learning_rate(std::size_t s, std::size_t a) const {
    return 1.0 / std::pow(1.0 + static_cast<double>(visits(s, a)), options_.lr_exponent);
}

double TabularD2Q::composed(std::size_t s, std::size_t a) const {
    const PairMoments& m = moments(s, a);
    const double expectation = m.count() > 0 ? m.mean2() : q2_(s, a);
    return agent::compose_q(q1_(s, a), q2_(s, a), expectation, m.beta());
}

Matrix TabularD2Q::composed_table() const {
    Matrix q(n_states_, n_actions_);
    for (std::size_t s = 0; s < n_states_; ++s)
        for (std::size_t a = 0; a < n_actions_; ++a) q(s, a) = composed(s, a);
    return q;
}

std::size_t TabularD2Q::greedy_action(std::size_t s) const {
    std::size_t best = 0;
    double best_value = composed(s, 0);
    for (std::size_t a = 1; a < n_actions_; ++a) {
        const double v = composed(s, a);
        if (v > best_value) {
            best_value = v;
            best = a;
        }
    }
    return best;
}

double TabularD2Q::target(double reward, std::size_t next_state, bool done) const {
    if (done) return reward;
    const std::size_t a_star = greedy_action(next_state);
    return reward + gamma_ * std::min(composed(next_state, a_star), q2_(next_state, a_star));
}

void TabularD2Q::update(std::size_t state, std::size_t action, double reward, std::size_t next_state, bool done) {
    if (state >= n_states_ || next_state >= n_states_ || action >= n_actions_)
        throw PreconditionError("tabular update: state or action index out of range");
    const double y = target(reward, next_state, done);
    const double alpha = learning_rate(state, action);
    q1_(state, action) += alpha * (y - q1_(state, action));
    q2_(state, action) += alpha * (y - q2_(state, action));
    moments_[state * n_actions_ + action].add(q1_(state, action), q2_(state, action));
    ++visits_[state * n_actions_ + action];
}

double TabularD2Q::disagreement() const {
    double d = 0.0;
    for (std::size_t i = 0; i < q1_.size(); ++i) d = std::max(d, std::abs(q1_.data()[i] - q2_.data()[i]));
    return d;
}

ConvergenceTrace run_convergence(const envs::FiniteMDP& mdp, std::uint64_t n_steps, std::uint64_t seed,
                                 const ConvergenceOptions& options) {
    if (options.sample_every == 0) throw ConfigError("run_convergence: sample_every must be positive");
    if (!(options.epsilon > 0.0 && options.epsilon <= 1.0))
        throw ConfigError("run_convergence: epsilon must lie in (0, 1] for an ergodic behaviour policy");
    ConvergenceTrace trace;
    trace.q_star = envs::value_iteration(mdp, options.oracle_tol);
    TabularD2Q learner(mdp.n_states, mdp.n_actions, mdp.gamma, derive_seed(seed, 11), options.tabular);
    Rng rng(derive_seed(seed, 12));
    std::uniform_int_distribution<std::size_t> random_action(0, mdp.n_actions - 1);

    auto sample = [&](std::uint64_t step) {
        trace.steps.push_back(step);
        trace.q_error.push_back(envs::sup_distance(learner.composed_table(), trace.q_star));
        trace.delta.push_back(learner.disagreement());
    };

    std::size_t s = 0;
    sample(0);
    for (std::uint64_t t = 1; t <= n_steps; ++t) {
        const bool explore = uniform(rng, 0.0, 1.0) < options.epsilon;
        const std::size_t a = explore ? random_action(rng) : learner.greedy_action(s);
        const std::size_t s2 = mdp.sample_next(s, a, rng);
        learner.update(s, a, mdp.reward(s, a), s2, false);
        s = s2;
        if (t % options.sample_every == 0 || t == n_steps) sample(t);
    }
    return trace;
}

namespace {

EstimatorBias summarize(double sum, double sum_sq, std::uint64_t n) {
    const double nn = static_cast<double>(n);
    const double mean = sum / nn;
    const double var = std::max(0.0, sum_sq / nn - mean * mean) * nn / (nn - 1.0);
    return {mean, std::sqrt(var / nn)};
}

}  // namespace

BiasReport bias_experiment(std::size_t n_states, std::size_t n_actions, double noise_sd, std::uint64_t n_trials,
                           std::uint64_t seed) {
    if (n_trials < 1000) throw ConfigError("bias_experiment: n_trials must be at least 1000");
    if (n_states == 0 || n_actions == 0) throw ConfigError("bias_experiment: need at least one state and action");
    if (!(noise_sd >= 0.0)) throw ConfigError("bias_experiment: noise_sd must be >= 0");

    Rng rng(seed);
    std::vector<PairMoments> moments(n_states * n_actions);
    std::vector<double> q1(n_actions), q2(n_actions), composed(n_actions);
    double s_single = 0, ss_single = 0, s_double = 0, ss_double = 0, s_d2q = 0, ss_d2q = 0;

    for (std::uint64_t trial = 0; trial < n_trials; ++trial) {
        const std::size_t s = trial % n_states;
        for (std::size_t a = 0; a < n_actions; ++a) {
            q1[a] = noise_sd * standard_normal(rng);
            q2[a] = noise_sd * standard_normal(rng);
        }
        const auto a1 = static_cast<std::size_t>(std::max_element(q1.begin(), q1.end()) - q1.begin());
        const double single = q1[a1];
        const double dbl = q2[a1];

        for (std::size_t a = 0; a < n_actions; ++a) {
            const PairMoments& m = moments[s * n_actions + a];
            const double expectation = m.count() > 0 ? m.mean2() : q2[a];
            composed[a] = agent::compose_q(q1[a], q2[a], expectation, m.beta());
        }
        const auto a_star =
            static_cast<std::size_t>(std::max_element(composed.begin(), composed.end()) - composed.begin());
        const double d2q = std::min(composed[a_star], q2[a_star]);
        for (std::size_t a = 0; a < n_actions; ++a) moments[s * n_actions + a].add(q1[a], q2[a]);

        s_single += single;
        ss_single += single * single;
        s_double += dbl;
        ss_double += dbl * dbl;
        s_d2q += d2q;
        ss_d2q += d2q * d2q;
    }
    BiasReport report;
    report.trials = n_trials;
    report.single_max = summarize(s_single, ss_single, n_trials);
    report.double_q = summarize(s_double, ss_double, n_trials);
    report.d2q = summarize(s_d2q, ss_d2q, n_trials);
    return report;
}

}  // namespace d2q::tabular

namespace d2q::tabular {

void write_convergence_csv(std::ostream& out, const ConvergenceTrace& trace) {
    out << "step,q_error,delta\n";
    for (std::size_t i = 0; i < trace.steps.size(); ++i)
        out << trace.steps[i] << ',' << format_number(trace.q_error[i]) << ',' << format_number(trace.delta[i])
            << '\n';
}

void write_bias_csv(std::ostream& out, const BiasReport& report) {
    out << "estimator,mean_bias,std_error,trials\n";
    const auto row = [&](const char* name, const EstimatorBias& b) {
        out << name << ',' << format_number(b.mean) << ',' << format_number(b.std_error) << ',' << report.trials
            << '\n';
    };
    row("single_max", report.single_max);
    row("double_q", report.double_q);
    row("d2q", report.d2q);
}

}  // namespace d2q::tabular
