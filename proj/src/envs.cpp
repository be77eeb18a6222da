#include "d2q/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "d2q/error.hpp"

namespace d2q::envs {

double wrap_angle(double theta) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(theta + std::numbers::pi, two_pi);
    if (w < 0.0) w += two_pi;
    return w - std::numbers::pi;
}

std::vector<double> PendulumEnv::reset(std::uint64_t seed) {
    Rng rng(seed);
    theta_ = uniform(rng, -std::numbers::pi, std::numbers::pi);
    theta_dot_ = uniform(rng, -1.0, 1.0);
    t_ = 0;
    return observation();
}

void PendulumEnv::set_state(double theta, double theta_dot) {
    theta_ = theta;
    theta_dot_ = std::clamp(theta_dot, -kMaxSpeed, kMaxSpeed);
    t_ = 0;
}

std::vector<double> PendulumEnv::observation() const {
    return {std::cos(theta_), std::sin(theta_), theta_dot_};
}

double PendulumEnv::energy() const {
    const double inertia = kMass * kLength * kLength / 3.0;
    return 0.5 * inertia * theta_dot_ * theta_dot_ + kMass * kGravity * 0.5 * kLength * std::cos(theta_);
}

StepResult PendulumEnv::step(std::span<const double> action) {
    const double u = clip_action(action.empty() ? 0.0 : action[0]);
    const double angle = wrap_angle(theta_);
    const double cost = angle * angle + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;

    const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                         3.0 / (kMass * kLength * kLength) * u;
    theta_dot_ = std::clamp(theta_dot_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
    theta_ += theta_dot_ * kDt;
    ++t_;
    return {observation(), -cost, t_ >= kHorizon};
}

std::vector<double> PointMassEnv::reset(std::uint64_t seed) {
    Rng rng(seed);
    position_ = {uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
    velocity_ = {0.0, 0.0};
    t_ = 0;
    return observation();
}

std::vector<double> PointMassEnv::observation() const {
    return {position_[0], position_[1], velocity_[0], velocity_[1]};
}

StepResult PointMassEnv::step(std::span<const double> action) {
    for (std::size_t i = 0; i < 2; ++i) {
        const double a = clip_action(i < action.size() ? action[i] : 0.0);
        velocity_[i] = std::clamp(velocity_[i] + a * kDt, -1.0, 1.0);
        position_[i] = std::clamp(position_[i] + velocity_[i] * kDt, -1.0, 1.0);
    }
    ++t_;
    const double dx = position_[0] - kGoal[0];
    const double dy = position_[1] - kGoal[1];
    return {observation(), -std::sqrt(dx * dx + dy * dy), t_ >= kHorizon};
}

std::unique_ptr<Environment> make_env(std::string_view name) {
    if (name == "pendulum") return std::make_unique<PendulumEnv>();
    if (name == "pointmass") return std::make_unique<PointMassEnv>();
    if (name == "mdp")
        throw ConfigError("env 'mdp' is a finite MDP; use the convergence/bias subcommands");
    throw ConfigError("unknown env '" + std::string(name) + "' (expected pendulum, pointmass or mdp)");
}

std::size_t FiniteMDP::sample_next(std::size_t s, std::size_t a, Rng& rng) const {
    const auto p = next_distribution(s, a);
    const double u = uniform(rng, 0.0, 1.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return i;
    }
    // Rounding left u >= acc; fall back to the last state with mass.
    for (std::size_t i = p.size(); i-- > 0;)
        if (p[i] > 0.0) return i;
    return p.size() - 1;
}

FiniteMDP generate_mdp(std::uint64_t seed, std::size_t n_states, std::size_t n_actions, double gamma) {
    if (n_states < 1 || n_actions < 1) throw ConfigError("generate_mdp: need at least one state and action");
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("generate_mdp: gamma must lie in (0, 1)");
    FiniteMDP mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.gamma = gamma;
    mdp.transitions.resize(n_states * n_actions * n_states);
    mdp.rewards.resize(n_states * n_actions);
    Rng rng(seed);
    // Dirichlet(1, ..., 1) = normalised independent Exp(1) draws.
    std::exponential_distribution<double> exp1(1.0);
    for (std::size_t sa = 0; sa < n_states * n_actions; ++sa) {
        double* row = mdp.transitions.data() + sa * n_states;
        double total = 0.0;
        for (std::size_t i = 0; i < n_states; ++i) {
            row[i] = exp1(rng);
            total += row[i];
        }
        if (total <= 0.0) {
            std::fill(row, row + n_states, 1.0 / static_cast<double>(n_states));
        } else {
            for (std::size_t i = 0; i < n_states; ++i) row[i] /= total;
        }
    }
    for (double& r : mdp.rewards) r = uniform(rng, -1.0, 1.0);
    return mdp;
}

Matrix bellman_optimality(const FiniteMDP& mdp, const Matrix& q) {
    const std::size_t S = mdp.n_states, A = mdp.n_actions;
    std::vector<double> v(S);
    for (std::size_t s = 0; s < S; ++s) {
        const auto row = q.row(s);
        v[s] = *std::max_element(row.begin(), row.end());
    }
    Matrix out(S, A);
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            const auto p = mdp.next_distribution(s, a);
            double ev = 0.0;
            for (std::size_t s2 = 0; s2 < S; ++s2) ev += p[s2] * v[s2];
            out(s, a) = mdp.reward(s, a) + mdp.gamma * ev;
        }
    }
    return out;
}

double sup_distance(const Matrix& a, const Matrix& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

Matrix value_iteration(const FiniteMDP& mdp, double tol, std::vector<double>* iterate_distances) {
    if (!(tol > 0.0)) throw ConfigError("value_iteration: tol must be positive");
    Matrix q(mdp.n_states, mdp.n_actions);
    for (;;) {
        Matrix next = bellman_optimality(mdp, q);
        const double dist = sup_distance(next, q);
        if (iterate_distances != nullptr) iterate_distances->push_back(dist);
        q = std::move(next);
        // dist is the residual of the previous iterate; the returned one is at most gamma * dist.
        if (dist < tol) return q;
    }
}

}  // namespace d2q::envs
