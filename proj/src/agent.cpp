#include "d2q/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "d2q/error.hpp"

namespace d2q::agent {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden,
                                     std::size_t out) {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

void require_finite(double value, const char* what) {
    if (!std::isfinite(value)) throw DivergenceError(std::string(what) + " is not finite");
}

// Action columns of a critic input gradient.
Matrix action_columns(const Matrix& input_grad, std::size_t obs_size) {
    Matrix out(input_grad.rows(), input_grad.cols() - obs_size);
    for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) = input_grad(r, obs_size + c);
    return out;
}

}  // namespace

AgentKind parse_agent_kind(std::string_view name) {
    if (name == "d2q") return AgentKind::D2Q;
    if (name == "td3") return AgentKind::TD3;
    if (name == "ddpg") return AgentKind::DDPG;
    throw ConfigError("unknown agent '" + std::string(name) + "' (expected d2q, td3 or ddpg)");
}

std::string_view to_string(AgentKind kind) {
    switch (kind) {
        case AgentKind::D2Q: return "d2q";
        case AgentKind::TD3: return "td3";
        case AgentKind::DDPG: return "ddpg";
    }
    return "unknown";
}

std::size_t AgentConfig::effective_policy_delay() const {
    if (policy_delay != 0) return policy_delay;
    return kind == AgentKind::TD3 ? 2 : 1;
}

void AgentConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
    if (!(sigma_explore >= 0.0)) throw ConfigError("sigma_explore must be >= 0");
    if (!(sigma_smooth >= 0.0)) throw ConfigError("sigma_smooth must be >= 0");
    if (!(noise_clip >= 0.0)) throw ConfigError("noise_clip must be >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    for (std::size_t h : hidden)
        if (h == 0) throw ConfigError("hidden layer widths must be positive");
    if (fixed_beta && !(*fixed_beta >= 0.0 && *fixed_beta <= 1.0))
        throw ConfigError("fixed beta must lie in [0, 1]");
}

double clamp_beta(double raw) {
    if (!(raw > 0.0)) return 0.0;
    return raw < 1.0 ? raw : 1.0;
}

BetaEstimate compute_beta(const Matrix& features_q1, const Matrix& features_q2) {
    if (features_q1.rows() != features_q2.rows() || features_q1.cols() != features_q2.cols())
        throw ShapeError("compute_beta: feature batches differ in shape");
    if (features_q1.rows() == 0) return {};
    double sum = 0.0;
    for (std::size_t i = 0; i < features_q1.rows(); ++i)
        sum += nn::cosine(features_q1.row(i), features_q2.row(i));
    const double raw = sum / static_cast<double>(features_q1.rows());
    return {raw, clamp_beta(raw)};
}

std::vector<double> compose_q(std::span<const double> q1, std::span<const double> q2, double q2_expect,
                              double beta) {
    if (q1.size() != q2.size()) throw ShapeError("compose_q: q1 and q2 differ in length");
    std::vector<double> out(q1.size());
    for (std::size_t i = 0; i < q1.size(); ++i) out[i] = compose_q(q1[i], q2[i], q2_expect, beta);
    return out;
}

Matrix concat_columns(const Matrix& left, const Matrix& right) {
    if (left.rows() != right.rows()) throw ShapeError("concat_columns: row counts differ");
    Matrix out(left.rows(), left.cols() + right.cols());
    for (std::size_t r = 0; r < left.rows(); ++r) {
        auto dst = out.row(r);
        std::copy(left.row(r).begin(), left.row(r).end(), dst.begin());
        std::copy(right.row(r).begin(), right.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(left.cols()));
    }
    return out;
}

CriticLoss critic_loss(const nn::DenseNet& q1, const nn::DenseNet* q2, const Matrix& inputs,
                       std::span<const double> targets, double lambda, bool with_grads) {
    const std::size_t n = inputs.rows();
    if (n == 0) throw PreconditionError("critic_loss: empty batch");
    if (targets.size() != n) throw ShapeError("critic_loss: target count differs from batch size");
    const double inv_n = 1.0 / static_cast<double>(n);

    CriticLoss out;
    const nn::ForwardCache c1 = nn::forward(q1, inputs);
    Matrix g1(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = c1.output()(i, 0) - targets[i];
        out.q1_loss += d * d;
        g1(i, 0) = 2.0 * d * inv_n;
    }
    out.q1_loss *= inv_n;

    if (q2 == nullptr) {
        out.q2_loss = kNaN;
        out.corr_raw = kNaN;
        out.total = out.q1_loss;
        if (with_grads) out.grad_q1 = nn::backward(q1, c1, g1).param_grads;
        return out;
    }

    const nn::ForwardCache c2 = nn::forward(*q2, inputs);
    Matrix g2(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = c2.output()(i, 0) - targets[i];
        out.q2_loss += d * d;
        g2(i, 0) = 2.0 * d * inv_n;
    }
    out.q2_loss *= inv_n;

    // Decorrelation penalty lambda * m^2 with m the batch-mean feature cosine.
    const Matrix& f1 = c1.last_hidden();
    const Matrix& f2 = c2.last_hidden();
    if (f1.cols() != f2.cols()) throw ShapeError("critic_loss: critics differ in feature width");
    Matrix h1(n, f1.cols());
    Matrix h2(n, f2.cols());
    double sum_cos = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum_cos += nn::cosine_with_grads(f1.row(i), f2.row(i), h1.row(i), h2.row(i));
    out.corr_raw = sum_cos * inv_n;
    out.total = out.q1_loss + out.q2_loss + lambda * out.corr_raw * out.corr_raw;

    if (with_grads) {
        const double scale = 2.0 * lambda * out.corr_raw * inv_n;
        for (double& v : h1.values()) v *= scale;
        for (double& v : h2.values()) v *= scale;
        nn::BackwardOptions o1;
        o1.last_hidden_grad = &h1;
        nn::BackwardOptions o2;
        o2.last_hidden_grad = &h2;
        out.grad_q1 = nn::backward(q1, c1, g1, o1).param_grads;
        out.grad_q2 = nn::backward(*q2, c2, g2, o2).param_grads;
    }
    return out;
}

ActorObjective actor_objective(const nn::DenseNet& actor, const nn::DenseNet& q1, const nn::DenseNet* q2,
                               const nn::DenseNet* q2_target, const Matrix& states,
                               const ActorObjectiveOptions& options, bool with_grads) {
    const std::size_t n = states.rows();
    if (n == 0) throw PreconditionError("actor_objective: empty batch");
    const double inv_n = 1.0 / static_cast<double>(n);
    const std::size_t obs = states.cols();

    ActorObjective out;
    const nn::ForwardCache ca = nn::forward(actor, states);
    const Matrix inputs = concat_columns(states, ca.output());
    const nn::ForwardCache c1 = nn::forward(q1, inputs);

    if (q2 == nullptr) {
        out.beta = {kNaN, kNaN};
        out.q2_expectation = kNaN;
        out.objective = mean(c1.output().values());
        if (with_grads) {
            Matrix g1(n, 1, inv_n);
            nn::BackwardOptions opts;
            opts.param_grads = false;
            const Matrix da = action_columns(nn::backward(q1, c1, g1, opts).input_grad, obs);
            out.grad = nn::backward(actor, ca, da).param_grads;
        }
        return out;
    }

    const nn::ForwardCache c2 = nn::forward(*q2, inputs);
    if (options.beta) {
        out.beta = {*options.beta, clamp_beta(*options.beta)};
    } else {
        out.beta = compute_beta(c1.last_hidden(), c2.last_hidden());
    }
    if (options.q2_expectation) {
        out.q2_expectation = *options.q2_expectation;
    } else {
        const nn::DenseNet& proxy = q2_target != nullptr ? *q2_target : *q2;
        out.q2_expectation = mean(nn::forward(proxy, inputs).output().values());
    }
    const double beta = out.beta.beta;
    const auto q = compose_q(c1.output().values(), c2.output().values(), out.q2_expectation, beta);
    out.objective = mean(q);

    if (with_grads) {
        nn::BackwardOptions opts;
        opts.param_grads = false;
        Matrix da = action_columns(nn::backward(q1, c1, Matrix(n, 1, inv_n), opts).input_grad, obs);
        if (beta != 0.0) {
            const Matrix da2 =
                action_columns(nn::backward(*q2, c2, Matrix(n, 1, -beta * inv_n), opts).input_grad, obs);
            for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] += da2.data()[i];
        }
        out.grad = nn::backward(actor, ca, da).param_grads;
    }
    return out;
}

Agent::Agent(AgentConfig config, std::size_t observation_size, std::size_t action_size, double max_action,
             std::uint64_t seed)
    : config_(std::move(config)), obs_size_(observation_size), act_size_(action_size), max_action_(max_action) {
    config_.validate();
    if (observation_size == 0 || action_size == 0) throw ConfigError("agent: empty observation or action space");
    if (!(max_action > 0.0)) throw ConfigError("agent: max_action must be positive");
    actor_ = nn::init_net(derive_seed(seed, 1), layer_sizes(obs_size_, config_.hidden, act_size_),
                          nn::OutputHead::Tanh, max_action_);
    const auto critic_sizes = layer_sizes(obs_size_ + act_size_, config_.hidden, 1);
    q1_ = nn::init_net(derive_seed(seed, 2), critic_sizes, nn::OutputHead::Identity);
    q2_ = nn::init_net(derive_seed(seed, 3), critic_sizes, nn::OutputHead::Identity);
    actor_target_ = actor_;
    q1_target_ = q1_;
    q2_target_ = q2_;
    actor_opt_ = nn::AdamState(actor_.num_params(), config_.lr);
    q1_opt_ = nn::AdamState(q1_.num_params(), config_.lr);
    q2_opt_ = nn::AdamState(q2_.num_params(), config_.lr);
}

std::vector<double> Agent::select_action(std::span<const double> observation, bool explore, Rng& rng) const {
    if (observation.size() != obs_size_) throw ShapeError("select_action: observation width mismatch");
    std::vector<double> action = nn::forward(actor_, observation);
    if (explore) {
        const double sd = config_.sigma_explore * max_action_;
        for (double& a : action) a += sd * standard_normal(rng);
    }
    for (double& a : action) a = std::clamp(a, -max_action_, max_action_);
    return action;
}

TargetResult Agent::compute_target(const replay::Batch& batch, Rng& rng) const {
    const std::size_t n = batch.size();
    if (n == 0) throw PreconditionError("compute_target: empty batch");
    TargetResult out;
    out.y.resize(n);

    Matrix next_actions = nn::forward(actor_target_, batch.next_states).output();
    if (config_.kind != AgentKind::DDPG) {
        const double sd = config_.sigma_smooth * max_action_;
        const double clip = config_.noise_clip * max_action_;
        for (double& a : next_actions.values()) {
            const double noise = std::clamp(sd * standard_normal(rng), -clip, clip);
            a = std::clamp(a + noise, -max_action_, max_action_);
        }
    }
    const Matrix inputs = concat_columns(batch.next_states, next_actions);
    const nn::ForwardCache c1 = nn::forward(q1_target_, inputs);
    out.next_actions = std::move(next_actions);

    if (config_.kind == AgentKind::DDPG) {
        out.beta = {kNaN, kNaN};
        out.q2_expectation = kNaN;
        for (std::size_t i = 0; i < n; ++i)
            out.y[i] = batch.rewards[i] + (1.0 - batch.dones[i]) * config_.gamma * c1.output()(i, 0);
        return out;
    }

    const nn::ForwardCache c2 = nn::forward(q2_target_, inputs);
    const auto q1v = c1.output().values();
    const auto q2v = c2.output().values();
    if (config_.kind == AgentKind::TD3) {
        out.beta = {kNaN, kNaN};
        out.q2_expectation = kNaN;
        for (std::size_t i = 0; i < n; ++i)
            out.y[i] = batch.rewards[i] + (1.0 - batch.dones[i]) * config_.gamma * std::min(q1v[i], q2v[i]);
        return out;
    }

    if (config_.fixed_beta) {
        out.beta = {*config_.fixed_beta, clamp_beta(*config_.fixed_beta)};
    } else {
        out.beta = compute_beta(c1.last_hidden(), c2.last_hidden());
    }
    out.q2_expectation = mean(q2v);
    for (std::size_t i = 0; i < n; ++i) {
        const double q = compose_q(q1v[i], q2v[i], out.q2_expectation, out.beta.beta);
        out.y[i] = batch.rewards[i] + (1.0 - batch.dones[i]) * config_.gamma * std::min(q, q2v[i]);
    }
    return out;
}

CriticStats Agent::critic_update(const replay::Batch& batch, std::span<const double> y) {
    const Matrix inputs = concat_columns(batch.states, batch.actions);
    const bool twin = twin_critics();
    const double lambda = config_.kind == AgentKind::D2Q ? config_.lambda : 0.0;
    CriticLoss loss = critic_loss(q1_, twin ? &q2_ : nullptr, inputs, y, lambda);
    require_finite(loss.total, "critic loss");
    nn::adam_step(q1_, loss.grad_q1, q1_opt_);
    if (twin) nn::adam_step(q2_, loss.grad_q2, q2_opt_);
    ++critic_updates_;
    return {loss.q1_loss, loss.q2_loss, loss.corr_raw};
}

ActorStats Agent::actor_update(const replay::Batch& batch) {
    const bool d2q = config_.kind == AgentKind::D2Q;
    ActorObjectiveOptions opts;
    if (config_.fixed_beta) opts.beta = *config_.fixed_beta;
    ActorObjective obj = actor_objective(actor_, q1_, d2q ? &q2_ : nullptr, d2q ? &q2_target_ : nullptr,
                                         batch.states, opts);
    require_finite(obj.objective, "actor objective");
    for (double& g : obj.grad) g = -g;  // Adam minimises; ascend the objective.
    nn::adam_step(actor_, obj.grad, actor_opt_);
    return {obj.objective, obj.beta};
}

void Agent::update_targets() {
    nn::polyak_update(actor_target_, actor_, config_.tau);
    nn::polyak_update(q1_target_, q1_, config_.tau);
    if (twin_critics()) nn::polyak_update(q2_target_, q2_, config_.tau);
}

TrainStats Agent::train_step(const replay::ReplayBuffer& buffer, Rng& rng) {
    if (buffer.size() < config_.batch_size)
        throw PreconditionError("train_step: replay buffer holds fewer transitions than one batch");
    const replay::Batch batch = buffer.sample_batch(config_.batch_size, rng);
    const TargetResult target = compute_target(batch, rng);
    const CriticStats critic = critic_update(batch, target.y);

    TrainStats stats;
    stats.q1_loss = critic.q1_loss;
    stats.q2_loss = critic.q2_loss;
    stats.corr_raw = critic.corr_raw;
    stats.beta = target.beta.beta;
    stats.actor_objective = kNaN;
    if (critic_updates_ % config_.effective_policy_delay() == 0) {
        stats.actor_objective = actor_update(batch).objective;
        stats.actor_updated = true;
        update_targets();
    }
    return stats;
}

std::vector<nn::NamedNet> Agent::named_networks() const {
    std::vector<nn::NamedNet> nets{{"actor", &actor_}, {"q1", &q1_}, {"actor_target", &actor_target_},
                                   {"q1_target", &q1_target_}};
    if (twin_critics()) {
        nets.emplace_back("q2", &q2_);
        nets.emplace_back("q2_target", &q2_target_);
    }
    return nets;
}

Agent make_baseline(AgentKind kind, AgentConfig config, std::size_t observation_size, std::size_t action_size,
                    double max_action, std::uint64_t seed) {
    if (kind == AgentKind::D2Q) throw ConfigError("make_baseline: d2q is not a baseline kind");
    config.kind = kind;
    return Agent(std::move(config), observation_size, action_size, max_action, seed);
}

}  // namespace d2q::agent
