#pragma once

// Tabular decorrelated double Q-learning on explicit finite MDPs, plus the
// max-of-noisy-estimates bias experiment.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "d2q/envs.hpp"
#include "d2q/matrix.hpp"
#include "d2q/random.hpp"

namespace d2q::tabular {

// Running population moments of a pair (x1, x2). With window == 0 every
// observation is weighted equally (Welford); otherwise the weight is 1/n for the
// first `window` observations and 1/window afterwards, so the moments track a
// drifting pair.
class PairMoments {
public:
    explicit PairMoments(std::size_t window = 0) : window_(window) {}

    void add(double x1, double x2);

    std::uint64_t count() const { return n_; }
    double mean1() const { return mean1_; }
    double mean2() const { return mean2_; }
    double var1() const { return var1_; }
    double cov() const { return cov_; }

    // clamp(cov / var1, 0, 1); 0 until two observations exist or when var1 is 0.
    double beta() const;

private:
    std::size_t window_;
    std::uint64_t n_ = 0;
    double mean1_ = 0.0;
    double mean2_ = 0.0;
    double var1_ = 0.0;
    double cov_ = 0.0;
};

struct TabularOptions {
    double lr_exponent = 0.8;       // alpha = 1 / (1 + n)^lr_exponent
    std::size_t moment_window = 100;
    double init_scale = 1.0;        // tables start uniform in [-init_scale, init_scale]
};

class TabularD2Q {
public:
    TabularD2Q(std::size_t n_states, std::size_t n_actions, double gamma, std::uint64_t seed,
               TabularOptions options = {});

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double gamma() const { return gamma_; }

    double q1(std::size_t s, std::size_t a) const { return q1_(s, a); }
    double q2(std::size_t s, std::size_t a) const { return q2_(s, a); }
    const Matrix& q1_table() const { return q1_; }
    const Matrix& q2_table() const { return q2_; }
    void set_values(std::size_t s, std::size_t a, double q1, double q2);

    std::uint64_t visits(std::size_t s, std::size_t a) const { return visits_[s * n_actions_ + a]; }
    double learning_rate(std::size_t s, std::size_t a) const;
    double beta(std::size_t s, std::size_t a) const { return moments_[s * n_actions_ + a].beta(); }
    const PairMoments& moments(std::size_t s, std::size_t a) const { return moments_[s * n_actions_ + a]; }

    // q1 - beta * (q2 - running mean of q2) at (s, a).
    double composed(std::size_t s, std::size_t a) const;
    Matrix composed_table() const;
    std::size_t greedy_action(std::size_t s) const;

    // Bootstrap target for a transition: r + (1 - done) * gamma * min(Q(s', a*), q2(s', a*)),
    // a* = argmax_a Q(s', a).
    double target(double reward, std::size_t next_state, bool done) const;

    // Move both tables toward the target with alpha(s, a), then record the new pair
    // in the (s, a) moments and bump the visit count. Throws PreconditionError on bad indices.
    void update(std::size_t state, std::size_t action, double reward, std::size_t next_state, bool done);

    // max over (s, a) of |q1 - q2|
    double disagreement() const;

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    double gamma_;
    TabularOptions options_;
    Matrix q1_;
    Matrix q2_;
    std::vector<std::uint64_t> visits_;
    std::vector<PairMoments> moments_;
};

struct ConvergenceTrace {
    std::vector<std::uint64_t> steps;
    std::vector<double> q_error;  // ||Q - Q*||_inf on the composed table
    std::vector<double> delta;    // max |q1 - q2|
    Matrix q_star;

    double final_q_error() const { return q_error.back(); }
    double final_delta() const { return delta.back(); }
};

struct ConvergenceOptions {
    double epsilon = 0.3;
    std::size_t sample_every = 100;
    double oracle_tol = 1e-12;
    TabularOptions tabular;
};

// Runs n_steps epsilon-greedy updates on one continuing trajectory from state 0,
// sampling both traces at step 0 and every sample_every updates.
ConvergenceTrace run_convergence(const envs::FiniteMDP& mdp, std::uint64_t n_steps, std::uint64_t seed,
                                 const ConvergenceOptions& options = {});

void write_convergence_csv(std::ostream& out, const ConvergenceTrace& trace);

struct EstimatorBias {
    double mean = 0.0;
    double std_error = 0.0;
};

struct BiasReport {
    EstimatorBias single_max;  // max_a q1(a)
    EstimatorBias double_q;    // q2(argmax_a q1(a))
    EstimatorBias d2q;         // min(Q(a*), q2(a*)), a* = argmax_a Q(a)
    std::uint64_t trials = 0;
};

// True values are all zero; each trial observes two independent noisy estimate
// vectors q1, q2 ~ N(0, noise_sd^2). The D2Q estimator takes beta and E[q2] per
// action from running moments over previous trials. Throws ConfigError unless
// n_trials >= 1000, n_actions >= 1 and noise_sd >= 0.
BiasReport bias_experiment(std::size_t n_states, std::size_t n_actions, double noise_sd,
                           std::uint64_t n_trials, std::uint64_t seed);

void write_bias_csv(std::ostream& out, const BiasReport& report);

}  // namespace d2q::tabular
