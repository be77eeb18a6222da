#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "d2q/matrix.hpp"
#include "d2q/random.hpp"

namespace d2q::envs {

struct StepResult {
    std::vector<double> observation;
    double reward = 0.0;
    bool done = false;  // set only when the horizon is reached
};

// Continuous-control environment with a box action space [-max_action, max_action]^n.
class Environment {
public:
    virtual ~Environment() = default;

    virtual std::string_view name() const = 0;
    virtual std::size_t observation_size() const = 0;
    virtual std::size_t action_size() const = 0;
    virtual double max_action() const = 0;
    virtual std::size_t horizon() const = 0;

    // Deterministic per seed.
    virtual std::vector<double> reset(std::uint64_t seed) = 0;
    // Out-of-range actions are clipped and counted in clipped_actions().
    virtual StepResult step(std::span<const double> action) = 0;
    virtual std::unique_ptr<Environment> clone() const = 0;

    std::uint64_t clipped_actions() const { return clipped_; }

protected:
    double clip_action(double a) {
        const double m = max_action();
        if (a > m || a < -m || a != a) {
            ++clipped_;
            return a != a ? 0.0 : (a > m ? m : -m);
        }
        return a;
    }

private:
    std::uint64_t clipped_ = 0;
};

// Classic torque-limited pendulum. theta = 0 is upright; observation is (cos, sin, theta_dot).
class PendulumEnv final : public Environment {
public:
    static constexpr double kGravity = 10.0;
    static constexpr double kMass = 1.0;
    static constexpr double kLength = 1.0;
    static constexpr double kDt = 0.05;
    static constexpr double kMaxSpeed = 8.0;
    static constexpr double kMaxTorque = 2.0;
    static constexpr std::size_t kHorizon = 200;

    std::string_view name() const override { return "pendulum"; }
    std::size_t observation_size() const override { return 3; }
    std::size_t action_size() const override { return 1; }
    double max_action() const override { return kMaxTorque; }
    std::size_t horizon() const override { return kHorizon; }

    std::vector<double> reset(std::uint64_t seed) override;
    StepResult step(std::span<const double> action) override;
    std::unique_ptr<Environment> clone() const override { return std::make_unique<PendulumEnv>(*this); }

    // Direct state access for tests and diagnostics.
    void set_state(double theta, double theta_dot);
    double theta() const { return theta_; }
    double theta_dot() const { return theta_dot_; }
    std::vector<double> observation() const;

    // Rigid-rod mechanical energy about the pivot, zero potential at the pivot height.
    double energy() const;

private:
    double theta_ = 0.0;
    double theta_dot_ = 0.0;
    std::size_t t_ = 0;
};

// Wrap an angle into [-pi, pi).
double wrap_angle(double theta);

// Point mass on [-1, 1]^2 driven by a bounded acceleration toward a fixed goal.
class PointMassEnv final : public Environment {
public:
    static constexpr double kDt = 0.1;
    static constexpr std::size_t kHorizon = 100;
    static constexpr std::array<double, 2> kGoal{0.5, -0.5};

    std::string_view name() const override { return "pointmass"; }
    std::size_t observation_size() const override { return 4; }
    std::size_t action_size() const override { return 2; }
    double max_action() const override { return 1.0; }
    std::size_t horizon() const override { return kHorizon; }

    std::vector<double> reset(std::uint64_t seed) override;
    StepResult step(std::span<const double> action) override;
    std::unique_ptr<Environment> clone() const override { return std::make_unique<PointMassEnv>(*this); }

    std::array<double, 2> position() const { return position_; }
    std::array<double, 2> velocity() const { return velocity_; }
    std::vector<double> observation() const;

private:
    std::array<double, 2> position_{};
    std::array<double, 2> velocity_{};
    std::size_t t_ = 0;
};

// "pendulum" or "pointmass". The "mdp" name selects the tabular path and is
// rejected here with a ConfigError, as is any unknown name.
std::unique_ptr<Environment> make_env(std::string_view name);

// Explicit finite MDP. transitions[(s * A + a) * S + s'] = P(s' | s, a).
struct FiniteMDP {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    double gamma = 0.9;
    std::vector<double> transitions;
    std::vector<double> rewards;  // rewards[s * A + a]

    std::span<const double> next_distribution(std::size_t s, std::size_t a) const {
        return {transitions.data() + (s * n_actions + a) * n_states, n_states};
    }
    double reward(std::size_t s, std::size_t a) const { return rewards[s * n_actions + a]; }
    std::size_t sample_next(std::size_t s, std::size_t a, Rng& rng) const;
};

// Transition rows from a symmetric Dirichlet(1), rewards uniform in [-1, 1].
// Throws ConfigError unless n_states, n_actions >= 1 and gamma in (0, 1).
FiniteMDP generate_mdp(std::uint64_t seed, std::size_t n_states, std::size_t n_actions, double gamma);

// (TQ)(s, a) = r(s, a) + gamma * sum_s' P(s'|s,a) max_a' Q(s', a'). Q is S x A.
Matrix bellman_optimality(const FiniteMDP& mdp, const Matrix& q);
double sup_distance(const Matrix& a, const Matrix& b);

// Iterates the optimality operator from Q = 0 until ||Q - TQ||_inf < tol. If
// `iterate_distances` is given it receives ||Q_{k+1} - Q_k||_inf for each sweep.
Matrix value_iteration(const FiniteMDP& mdp, double tol, std::vector<double>* iterate_distances = nullptr);

}  // namespace d2q::envs
