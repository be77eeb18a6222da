#pragma once

// Decorrelated double Q-learning for continuous actions, with DDPG and TD3
// baselines built from the same actor/critic machinery.
//
// D2Q keeps twin critics q1, q2 and composes them as a control variate:
//
//     Q(s, a) = q1(s, a) - beta * (q2(s, a) - E[q2])
//
// Critics regress toward y = r + (1 - done) * gamma * min(Q', q2') computed
// entirely from target networks, with a penalty lambda * (mean cosine of the
// two critics' last-hidden features)^2. The actor ascends the batch mean of Q.
// beta is always a detached coefficient; E[q2] is the batch mean of the target
// critic q2'.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "d2q/matrix.hpp"
#include "d2q/checkpoint.hpp"
#include "d2q/nn.hpp"
#include "d2q/random.hpp"
#include "d2q/replay.hpp"

namespace d2q::agent {

enum class AgentKind { D2Q, TD3, DDPG };

// Throws ConfigError for anything other than d2q, td3, ddpg.
AgentKind parse_agent_kind(std::string_view name);
std::string_view to_string(AgentKind kind);

struct AgentConfig {
    AgentKind kind = AgentKind::D2Q;
    double gamma = 0.99;
    double tau = 0.005;
    double lambda = 2.0;
    double sigma_explore = 0.1;  // fraction of max_action
    double sigma_smooth = 0.2;   // fraction of max_action
    double noise_clip = 0.5;     // fraction of max_action
    std::size_t batch_size = 100;
    std::vector<std::size_t> hidden{64, 64};
    double lr = 1e-3;
    // Critic updates per actor/target update. 0 picks the kind's default (2 for TD3, else 1).
    std::size_t policy_delay = 0;
    // Replaces the cosine beta estimate in targets and actor updates when set.
    std::optional<double> fixed_beta;

    std::size_t effective_policy_delay() const;
    // Throws ConfigError on out-of-range hyperparameters.
    void validate() const;
};

enum class BetaMode {
    Cosine,  // deep agent: mean cosine of last-hidden features
    CovVar,  // tabular: cov(q1, q2) / var(q1)
};

struct BetaEstimate {
    double raw = 0.0;   // before clamping
    double beta = 0.0;  // in [0, 1]
};

// Clamp to [0, 1]; NaN maps to 0.
double clamp_beta(double raw);

// Mean over rows of cosine(f1_i, f2_i), clamped. Throws ShapeError on mismatched shapes.
BetaEstimate compute_beta(const Matrix& features_q1, const Matrix& features_q2);

inline double compose_q(double q1, double q2, double q2_expect, double beta) {
    return q1 - beta * (q2 - q2_expect);
}
std::vector<double> compose_q(std::span<const double> q1, std::span<const double> q2, double q2_expect,
                              double beta);

// Row-wise [state | action].
Matrix concat_columns(const Matrix& left, const Matrix& right);

struct CriticLoss {
    double q1_loss = 0.0;  // mean (q1 - y)^2
    double q2_loss = 0.0;  // mean (q2 - y)^2; NaN with a single critic
    double corr_raw = 0.0; // mean cosine of features; NaN with a single critic
    double total = 0.0;    // q1_loss + q2_loss + lambda * corr_raw^2
    std::vector<double> grad_q1;
    std::vector<double> grad_q2;
};

// Loss and exact gradients for the twin-critic objective. q2 may be null (DDPG).
CriticLoss critic_loss(const nn::DenseNet& q1, const nn::DenseNet* q2, const Matrix& inputs,
                       std::span<const double> targets, double lambda, bool with_grads = true);

struct ActorObjectiveOptions {
    // Hold these fixed instead of estimating them (used by gradient checks).
    std::optional<double> beta;
    std::optional<double> q2_expectation;
};

struct ActorObjective {
    double objective = 0.0;  // batch mean of Q(s, pi(s)) (or q1 without a second critic)
    BetaEstimate beta;
    double q2_expectation = 0.0;
    std::vector<double> grad;  // d objective / d actor params (ascent direction)
};

// q2 and q2_target may be null, giving the single-critic DDPG/TD3 objective mean q1(s, pi(s)).
ActorObjective actor_objective(const nn::DenseNet& actor, const nn::DenseNet& q1, const nn::DenseNet* q2,
                               const nn::DenseNet* q2_target, const Matrix& states,
                               const ActorObjectiveOptions& options = {}, bool with_grads = true);

struct TargetResult {
    std::vector<double> y;
    Matrix next_actions;        // smoothed target-policy actions a'
    BetaEstimate beta;          // D2Q only
    double q2_expectation = 0.0;  // D2Q only
};

struct CriticStats {
    double q1_loss = 0.0;
    double q2_loss = 0.0;
    double corr_raw = 0.0;
};

struct ActorStats {
    double objective = 0.0;
    BetaEstimate beta;
};

struct TrainStats {
    double q1_loss = 0.0;
    double q2_loss = 0.0;
    double corr_raw = 0.0;        // online critic feature cosine, pre-clamp
    double beta = 0.0;            // beta used in the bootstrap target; NaN unless D2Q
    double actor_objective = 0.0; // NaN on steps without an actor update
    bool actor_updated = false;
};

class Agent {
public:
    Agent(AgentConfig config, std::size_t observation_size, std::size_t action_size, double max_action,
          std::uint64_t seed);

    const AgentConfig& config() const { return config_; }
    AgentKind kind() const { return config_.kind; }
    bool twin_critics() const { return config_.kind != AgentKind::DDPG; }
    std::size_t observation_size() const { return obs_size_; }
    std::size_t action_size() const { return act_size_; }
    double max_action() const { return max_action_; }
    std::uint64_t critic_updates() const { return critic_updates_; }

    // max_action * tanh(pi(s)); with explore, adds N(0, (sigma_explore * max_action)^2)
    // per coordinate and clips to the action box.
    std::vector<double> select_action(std::span<const double> observation, bool explore, Rng& rng) const;

    // Bootstrap targets from the target networks; consumes smoothing noise from rng (TD3, D2Q).
    TargetResult compute_target(const replay::Batch& batch, Rng& rng) const;

    // One Adam step on the online critics toward y.
    CriticStats critic_update(const replay::Batch& batch, std::span<const double> y);

    // One Adam ascent step on the actor.
    ActorStats actor_update(const replay::Batch& batch);

    // Polyak-average every target network toward its online network.
    void update_targets();

    // Sample, target, critic step, and (on the policy-delay cadence) actor step and target update.
    // Throws PreconditionError when the buffer holds fewer than batch_size transitions.
    TrainStats train_step(const replay::ReplayBuffer& buffer, Rng& rng);

    const nn::DenseNet& actor() const { return actor_; }
    const nn::DenseNet& critic1() const { return q1_; }
    const nn::DenseNet& critic2() const { return q2_; }
    const nn::DenseNet& target_actor() const { return actor_target_; }
    const nn::DenseNet& target_critic1() const { return q1_target_; }
    const nn::DenseNet& target_critic2() const { return q2_target_; }
    nn::DenseNet& mutable_actor() { return actor_; }
    nn::DenseNet& mutable_critic1() { return q1_; }
    nn::DenseNet& mutable_critic2() { return q2_; }
    nn::DenseNet& mutable_target_actor() { return actor_target_; }
    nn::DenseNet& mutable_target_critic1() { return q1_target_; }
    nn::DenseNet& mutable_target_critic2() { return q2_target_; }

    std::vector<nn::NamedNet> named_networks() const;

private:
    AgentConfig config_;
    std::size_t obs_size_;
    std::size_t act_size_;
    double max_action_;
    nn::DenseNet actor_, q1_, q2_;
    nn::DenseNet actor_target_, q1_target_, q2_target_;
    nn::AdamState actor_opt_, q1_opt_, q2_opt_;
    std::uint64_t critic_updates_ = 0;
};

// DDPG: single critic, y = r + gamma * q1'(s', pi'(s')). TD3: clipped double-Q
// target with smoothing noise and a policy delay of 2 (unless set explicitly).
Agent make_baseline(AgentKind kind, AgentConfig config, std::size_t observation_size,
                    std::size_t action_size, double max_action, std::uint64_t seed);

}  // namespace d2q::agent
