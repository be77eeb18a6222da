#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "d2q/agent.hpp"
#include "d2q/error.hpp"
#include "support.hpp"

using namespace d2q;
using namespace d2q::agent;

namespace {

constexpr std::size_t kObs = 3;
constexpr std::size_t kAct = 1;
constexpr double kMax = 2.0;

AgentConfig small_config(AgentKind kind = AgentKind::D2Q) {
    AgentConfig c;
    c.kind = kind;
    c.hidden = {8, 8};
    c.batch_size = 16;
    return c;
}

replay::Batch random_batch(Rng& rng, std::size_t n, double done_rate = 0.0) {
    replay::Batch b;
    b.states = testing::random_matrix(rng, n, kObs);
    b.actions = testing::random_matrix(rng, n, kAct, -kMax, kMax);
    b.next_states = testing::random_matrix(rng, n, kObs);
    b.rewards = testing::random_vector(rng, n, -2.0, 0.0);
    b.dones.resize(n);
    for (double& d : b.dones) d = uniform(rng, 0.0, 1.0) < done_rate ? 1.0 : 0.0;
    return b;
}

replay::ReplayBuffer filled_buffer(std::size_t n, std::uint64_t seed) {
    replay::ReplayBuffer buf(1000);
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i)
        buf.push({testing::random_vector(rng, kObs), testing::random_vector(rng, kAct, -kMax, kMax),
                  uniform(rng, -2.0, 0.0), i % 50 == 49, testing::random_vector(rng, kObs)});
    return buf;
}

// Critic whose output is a constant bias and whose features vanish.
void make_constant(nn::DenseNet& net, double value) {
    for (double& p : net.mutable_params()) p = 0.0;
    net.mutable_bias(net.num_layers() - 1)[0] = value;
}

bool params_equal(const nn::DenseNet& a, const nn::DenseNet& b) { return a.same_parameters(b); }

}  // namespace

TEST_CASE("agent kinds parse and print") {
    CHECK(parse_agent_kind("d2q") == AgentKind::D2Q);
    CHECK(parse_agent_kind("td3") == AgentKind::TD3);
    CHECK(parse_agent_kind("ddpg") == AgentKind::DDPG);
    CHECK(to_string(AgentKind::TD3) == "td3");
    CHECK_THROWS_AS(parse_agent_kind("frobnicate"), ConfigError);
}

TEST_CASE("config validation rejects out-of-range hyperparameters") {
    AgentConfig c;
    CHECK_NOTHROW(c.validate());
    c.gamma = 1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.tau = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.lambda = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(AgentConfig{}.effective_policy_delay() == 1);
    CHECK(small_config(AgentKind::TD3).effective_policy_delay() == 2);
}

TEST_CASE("compose_q examples") {
    CHECK(compose_q(2.0, 3.0, 1.0, 0.5) == 1.0);
    CHECK(compose_q(2.0, 3.0, 1.0, 0.0) == 2.0);
    CHECK(compose_q(2.0, 3.0, 3.0, 0.7) == 2.0);
    const std::vector<double> q1{1.0, 2.0}, q2{0.0, 4.0};
    const auto q = compose_q(q1, q2, 2.0, 0.5);
    CHECK(q[0] == 2.0);
    CHECK(q[1] == 1.0);
}

TEST_CASE("compute_beta examples") {
    Matrix f(2, 3);
    f(0, 0) = 1.0;
    f(0, 1) = 2.0;
    f(1, 2) = 3.0;
    CHECK(compute_beta(f, f).beta == doctest::Approx(1.0));

    Matrix g(2, 3);
    g(0, 2) = 1.0;
    g(1, 0) = 5.0;
    CHECK(compute_beta(f, g).beta == 0.0);

    Matrix neg = f;
    for (double& v : neg.values()) v = -v;
    const auto anti = compute_beta(f, neg);
    CHECK(anti.raw == doctest::Approx(-1.0));
    CHECK(anti.beta == 0.0);
    CHECK_THROWS_AS(compute_beta(f, Matrix(3, 3)), ShapeError);
    CHECK(clamp_beta(std::nan("")) == 0.0);
    CHECK(clamp_beta(1.7) == 1.0);
}

TEST_CASE("select_action is deterministic without noise and stays in bounds") {
    Agent a(small_config(), kObs, kAct, kMax, 1);
    Rng rng(2);
    const std::vector<double> s{0.1, -0.4, 3.0};
    const auto x = a.select_action(s, false, rng);
    CHECK(x == a.select_action(s, false, rng));
    for (int i = 0; i < 500; ++i) {
        const auto y = a.select_action(testing::random_vector(rng, kObs, -10, 10), true, rng);
        CHECK(std::abs(y[0]) <= kMax);
    }
    AgentConfig quiet = small_config();
    quiet.sigma_explore = 0.0;
    Agent b(quiet, kObs, kAct, kMax, 1);
    CHECK(b.select_action(s, true, rng) == x);
    CHECK_THROWS_AS(a.select_action(std::vector<double>{1.0}, false, rng), ShapeError);
}

TEST_CASE("target substitution example y = 1 + 0.9 * 1.5") {
    // Zero hidden weights make features vanish, so beta = 0 and Q' = q1' = 2.0.
    AgentConfig c = small_config();
    c.gamma = 0.9;
    Agent a(c, kObs, kAct, kMax, 3);
    make_constant(a.mutable_target_critic1(), 2.0);
    make_constant(a.mutable_target_critic2(), 1.5);
    Rng rng(4);
    replay::Batch b = random_batch(rng, 5);
    std::fill(b.rewards.begin(), b.rewards.end(), 1.0);
    b.dones[2] = 1.0;
    const auto t = a.compute_target(b, rng);
    CHECK(t.beta.beta == 0.0);
    for (std::size_t i = 0; i < 5; ++i) CHECK(t.y[i] == doctest::Approx(i == 2 ? 1.0 : 2.35).epsilon(1e-15));
}

TEST_CASE("identical target critics give y = r + gamma * q2'") {
    // q1' = q2' means beta = 1 and Q' = mean(q2'), so min(Q', q2') picks q2' only
    // for below-average entries; in general y = r + gamma * min(mean q2', q2').
    AgentConfig c = small_config();
    Agent a(c, kObs, kAct, kMax, 5);
    a.mutable_target_critic2() = a.target_critic1();
    Rng rng(6);
    const replay::Batch b = random_batch(rng, 20);
    Rng noise(7);
    const auto t = a.compute_target(b, noise);
    CHECK(t.beta.beta == doctest::Approx(1.0));
    const Matrix q2 = nn::forward(a.target_critic2(), concat_columns(b.next_states, t.next_actions)).output();
    double mean = 0.0;
    for (double v : q2.values()) mean += v;
    mean /= 20.0;
    CHECK(t.q2_expectation == doctest::Approx(mean).epsilon(1e-14));
    for (std::size_t i = 0; i < 20; ++i)
        CHECK(t.y[i] == doctest::Approx(b.rewards[i] + c.gamma * std::min(mean, q2(i, 0))).epsilon(1e-12));

    // With a constant q2', Q' = q2' everywhere and y = r + gamma * q2' exactly.
    make_constant(a.mutable_target_critic1(), 0.8);
    make_constant(a.mutable_target_critic2(), 0.8);
    const auto flat = a.compute_target(b, noise);
    for (std::size_t i = 0; i < 20; ++i) CHECK(flat.y[i] == b.rewards[i] + c.gamma * 0.8);
}

TEST_CASE("targets are dominated by r + gamma * q2' and masked on done") {
    Rng rng(8);
    for (int k = 0; k < 20; ++k) {
        Agent a(small_config(), kObs, kAct, kMax, 100 + k);
        for (double& p : a.mutable_target_critic1().mutable_params()) p += uniform(rng, -0.5, 0.5);
        const replay::Batch b = random_batch(rng, 50, 0.3);
        const auto t = a.compute_target(b, rng);
        CHECK(t.beta.beta >= 0.0);
        CHECK(t.beta.beta <= 1.0);
        const Matrix q2 = nn::forward(a.target_critic2(), concat_columns(b.next_states, t.next_actions)).output();
        for (std::size_t i = 0; i < 50; ++i) {
            CHECK(t.y[i] <= b.rewards[i] + (1.0 - b.dones[i]) * a.config().gamma * q2(i, 0));
            if (b.dones[i] == 1.0) CHECK(t.y[i] == b.rewards[i]);
            CHECK(std::abs(t.next_actions(i, 0)) <= kMax);
        }
    }
}

TEST_CASE("smoothing noise is clipped") {
    AgentConfig c = small_config(AgentKind::TD3);
    c.sigma_smooth = 50.0;  // every draw saturates the clip
    c.noise_clip = 0.1;
    Agent a(c, kObs, kAct, kMax, 9);
    Rng rng(10);
    const replay::Batch b = random_batch(rng, 30);
    const Matrix clean = nn::forward(a.target_actor(), b.next_states).output();
    const auto t = a.compute_target(b, rng);
    for (std::size_t i = 0; i < 30; ++i) {
        const double shift = std::abs(t.next_actions(i, 0) - clean(i, 0));
        CHECK(shift <= 0.1 * kMax + 1e-12);
    }
}

TEST_CASE("critic loss with lambda = 0 is twin regression") {
    Rng rng(11);
    const nn::DenseNet q1 = testing::random_net(1, {4, 8, 1});
    const nn::DenseNet q2 = testing::random_net(2, {4, 8, 1});
    const Matrix x = testing::random_matrix(rng, 7, 4);
    const auto y = testing::random_vector(rng, 7);
    const auto twin = critic_loss(q1, &q2, x, y, 0.0);
    const auto one = critic_loss(q1, nullptr, x, y, 0.0);
    const auto other = critic_loss(q2, nullptr, x, y, 0.0);
    CHECK(twin.q1_loss == one.q1_loss);
    CHECK(twin.q2_loss == other.q1_loss);
    CHECK(twin.total == doctest::Approx(one.total + other.total).epsilon(1e-15));
    CHECK(twin.grad_q1 == one.grad_q1);
    CHECK(twin.grad_q2 == other.grad_q1);
    CHECK(std::isnan(one.q2_loss));
}

TEST_CASE("critic loss gradients including the corr term match finite differences") {
    Rng rng(12);
    for (int k = 0; k < 5; ++k) {
        nn::DenseNet q1 = testing::random_net(20 + k, {4, 16, 12, 1});
        nn::DenseNet q2 = testing::random_net(30 + k, {4, 16, 12, 1});
        const Matrix x = testing::random_matrix(rng, 8, 4);
        const auto y = testing::random_vector(rng, 8);
        const double lambda = 3.0;
        const auto loss = critic_loss(q1, &q2, x, y, lambda);
        CHECK(loss.total == doctest::Approx(loss.q1_loss + loss.q2_loss + lambda * loss.corr_raw * loss.corr_raw));
        std::vector<double> p1(q1.params().begin(), q1.params().end());
        const auto n1 = testing::finite_difference(p1, [&] {
            nn::DenseNet probe = q1;
            std::copy(p1.begin(), p1.end(), probe.mutable_params().begin());
            return critic_loss(probe, &q2, x, y, lambda, false).total;
        });
        std::vector<double> p2(q2.params().begin(), q2.params().end());
        const auto n2 = testing::finite_difference(p2, [&] {
            nn::DenseNet probe = q2;
            std::copy(p2.begin(), p2.end(), probe.mutable_params().begin());
            return critic_loss(q1, &probe, x, y, lambda, false).total;
        });
        CHECK(testing::max_relative_error(loss.grad_q1, n1) < 1e-4);
        CHECK(testing::max_relative_error(loss.grad_q2, n2) < 1e-4);

        // The corr term alone: zero-weight regression would still leave it.
        const auto corr_only = critic_loss(q1, &q2, x, y, lambda);
        const auto no_corr = critic_loss(q1, &q2, x, y, 0.0);
        std::vector<double> diff(corr_only.grad_q1.size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = corr_only.grad_q1[i] - no_corr.grad_q1[i];
        const auto nc = testing::finite_difference(p1, [&] {
            nn::DenseNet probe = q1;
            std::copy(p1.begin(), p1.end(), probe.mutable_params().begin());
            const double c = critic_loss(probe, &q2, x, y, lambda, false).corr_raw;
            return lambda * c * c;
        });
        CHECK(testing::max_relative_error(diff, nc) < 1e-4);
    }
}

TEST_CASE("actor objective gradient matches finite differences with beta and E fixed") {
    Rng rng(13);
    for (int k = 0; k < 5; ++k) {
        nn::DenseNet actor = testing::random_net(40 + k, {kObs, 16, 16, kAct}, nn::OutputHead::Tanh, kMax);
        const nn::DenseNet q1 = testing::random_net(50 + k, {kObs + kAct, 16, 16, 1});
        const nn::DenseNet q2 = testing::random_net(60 + k, {kObs + kAct, 16, 16, 1});
        const Matrix s = testing::random_matrix(rng, 8, kObs);
        ActorObjectiveOptions o;
        o.beta = 0.35;
        o.q2_expectation = 0.2;
        const auto obj = actor_objective(actor, q1, &q2, nullptr, s, o);
        std::vector<double> p(actor.params().begin(), actor.params().end());
        const auto numeric = testing::finite_difference(p, [&] {
            nn::DenseNet probe = actor;
            std::copy(p.begin(), p.end(), probe.mutable_params().begin());
            return actor_objective(probe, q1, &q2, nullptr, s, o, false).objective;
        });
        CHECK(testing::max_relative_error(obj.grad, numeric) < 1e-4);
    }
}

TEST_CASE("actor objective with beta 0 equals the single-critic objective") {
    Rng rng(14);
    const nn::DenseNet actor = testing::random_net(70, {kObs, 8, kAct}, nn::OutputHead::Tanh, kMax);
    const nn::DenseNet q1 = testing::random_net(71, {kObs + kAct, 8, 1});
    const nn::DenseNet q2 = testing::random_net(72, {kObs + kAct, 8, 1});
    const Matrix s = testing::random_matrix(rng, 10, kObs);
    ActorObjectiveOptions o;
    o.beta = 0.0;
    const auto d2q = actor_objective(actor, q1, &q2, &q2, s, o);
    const auto ddpg = actor_objective(actor, q1, nullptr, nullptr, s);
    CHECK(d2q.objective == ddpg.objective);
    CHECK(d2q.grad == ddpg.grad);
}

TEST_CASE("critics constant in the action leave the actor unchanged") {
    Agent a(small_config(), kObs, kAct, kMax, 15);
    // Zero the first-layer weights that read the action column.
    for (nn::DenseNet* q : {&a.mutable_critic1(), &a.mutable_critic2()}) {
        auto w = q->mutable_weight(0);
        const std::size_t in = kObs + kAct;
        for (std::size_t o = 0; o < q->layer_sizes()[1]; ++o) w[o * in + kObs] = 0.0;
    }
    const nn::DenseNet before = a.actor();
    Rng rng(16);
    const auto stats = a.actor_update(random_batch(rng, 16));
    CHECK(std::isfinite(stats.objective));
    CHECK(params_equal(a.actor(), before));
}

TEST_CASE("perfect critics with orthogonal features do not move") {
    // Critic input (s0, s1, s2, a); q1 sees only s0 and q2 only s1 through
    // disjoint hidden units, so features are orthogonal; output weights are zero
    // and both biases equal the target.
    AgentConfig c = small_config();
    c.hidden = {2};
    c.lambda = 2.0;
    Agent a(c, kObs, kAct, kMax, 17);
    nn::DenseNet& q1 = a.mutable_critic1();
    nn::DenseNet& q2 = a.mutable_critic2();
    for (double& p : q1.mutable_params()) p = 0.0;
    for (double& p : q2.mutable_params()) p = 0.0;
    q1.mutable_weight(0)[0 * 4 + 0] = 1.0;  // unit 0 reads s0
    q2.mutable_weight(0)[1 * 4 + 1] = 1.0;  // unit 1 reads s1
    q1.mutable_bias(1)[0] = 0.5;
    q2.mutable_bias(1)[0] = 0.5;
    Rng rng(18);
    replay::Batch b = random_batch(rng, 16);
    for (std::size_t i = 0; i < 16; ++i) {
        b.states(i, 0) = uniform(rng, 0.1, 1.0);
        b.states(i, 1) = uniform(rng, 0.1, 1.0);
    }
    const std::vector<double> y(16, 0.5);
    const nn::DenseNet q1_before = q1, q2_before = q2;
    const auto stats = a.critic_update(b, y);
    CHECK(stats.q1_loss == 0.0);
    CHECK(stats.q2_loss == 0.0);
    CHECK(stats.corr_raw == 0.0);
    CHECK(params_equal(a.critic1(), q1_before));
    CHECK(params_equal(a.critic2(), q2_before));
}

TEST_CASE("updates never touch target networks") {
    Agent a(small_config(), kObs, kAct, kMax, 19);
    const nn::DenseNet ta = a.target_actor(), t1 = a.target_critic1(), t2 = a.target_critic2();
    Rng rng(20);
    const replay::Batch b = random_batch(rng, 16, 0.2);
    const auto t = a.compute_target(b, rng);
    a.critic_update(b, t.y);
    a.actor_update(b);
    CHECK(params_equal(a.target_actor(), ta));
    CHECK(params_equal(a.target_critic1(), t1));
    CHECK(params_equal(a.target_critic2(), t2));
    CHECK_FALSE(params_equal(a.critic1(), t1));
}

TEST_CASE("target update is an exact Polyak step") {
    Agent a(small_config(), kObs, kAct, kMax, 21);
    Rng rng(22);
    for (double& p : a.mutable_critic1().mutable_params()) p += uniform(rng, -1.0, 1.0);
    const std::vector<double> before(a.target_critic1().params().begin(), a.target_critic1().params().end());
    a.update_targets();
    const double tau = a.config().tau;
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(a.target_critic1().params()[i] == (1.0 - tau) * before[i] + tau * a.critic1().params()[i]);
}

TEST_CASE("train_step: determinism, precondition and the convexity bound") {
    const auto buffer = filled_buffer(200, 23);
    Agent a(small_config(), kObs, kAct, kMax, 24);
    Agent b(small_config(), kObs, kAct, kMax, 24);
    Rng ra(25), rb(25);
    for (int i = 0; i < 30; ++i) {
        const auto sa = a.train_step(buffer, ra);
        const auto sb = b.train_step(buffer, rb);
        CHECK(sa.q1_loss == sb.q1_loss);
        CHECK(sa.beta == sb.beta);
    }
    for (const auto& [x, y] : {std::pair{&a.actor(), &b.actor()}, {&a.critic1(), &b.critic1()},
                               {&a.critic2(), &b.critic2()}, {&a.target_critic2(), &b.target_critic2()}})
        CHECK(params_equal(*x, *y));

    Agent c(small_config(), kObs, kAct, kMax, 26);
    const nn::DenseNet old_target = c.target_critic1();
    Rng rc(27);
    const auto stats = c.train_step(buffer, rc);
    CHECK(stats.actor_updated);
    const double tau = c.config().tau;
    for (std::size_t i = 0; i < old_target.num_params(); ++i) {
        const double moved = std::abs(c.target_critic1().params()[i] - old_target.params()[i]);
        const double gap = std::abs(c.critic1().params()[i] - old_target.params()[i]);
        // Recovering the step by subtraction costs a few ulps of the operands.
        const double ulps = 4.0 * std::numeric_limits<double>::epsilon() *
                            (std::abs(old_target.params()[i]) + std::abs(c.critic1().params()[i]));
        CHECK(moved <= tau * gap + ulps);
    }

    const auto small = filled_buffer(5, 28);
    CHECK_THROWS_AS(c.train_step(small, rc), PreconditionError);
}

TEST_CASE("TD3 delays actor and target updates") {
    const auto buffer = filled_buffer(100, 29);
    Agent a = make_baseline(AgentKind::TD3, small_config(), kObs, kAct, kMax, 30);
    Rng rng(31);
    const nn::DenseNet t0 = a.target_critic1();
    const auto s1 = a.train_step(buffer, rng);
    CHECK_FALSE(s1.actor_updated);
    CHECK(std::isnan(s1.actor_objective));
    CHECK(params_equal(a.target_critic1(), t0));
    const auto s2 = a.train_step(buffer, rng);
    CHECK(s2.actor_updated);
    CHECK_FALSE(params_equal(a.target_critic1(), t0));
    CHECK(std::isnan(s2.beta));
}

TEST_CASE("baselines: identical TD3 critics reproduce the DDPG target") {
    AgentConfig td3 = small_config(AgentKind::TD3);
    td3.sigma_smooth = 0.0;
    Agent t = make_baseline(AgentKind::TD3, td3, kObs, kAct, kMax, 32);
    Agent d = make_baseline(AgentKind::DDPG, small_config(), kObs, kAct, kMax, 32);
    t.mutable_target_critic2() = t.target_critic1();
    CHECK(params_equal(t.target_actor(), d.target_actor()));
    CHECK(params_equal(t.target_critic1(), d.target_critic1()));
    Rng rng(33);
    const replay::Batch b = random_batch(rng, 25, 0.2);
    Rng r1(34), r2(34);
    const auto yt = t.compute_target(b, r1).y;
    const auto yd = d.compute_target(b, r2).y;
    CHECK(yt == yd);
    for (std::size_t i = 0; i < 25; ++i)
        if (b.dones[i] == 1.0) CHECK(yd[i] == b.rewards[i]);
}

TEST_CASE("baselines: D2Q with lambda 0 and beta 0 has the TD3 target") {
    AgentConfig dc = small_config();
    dc.lambda = 0.0;
    dc.fixed_beta = 0.0;
    Agent d(dc, kObs, kAct, kMax, 35);
    Agent t = make_baseline(AgentKind::TD3, small_config(), kObs, kAct, kMax, 35);
    Rng rng(36);
    const replay::Batch b = random_batch(rng, 25, 0.1);
    Rng r1(37), r2(37);
    CHECK(d.compute_target(b, r1).y == t.compute_target(b, r2).y);
}

TEST_CASE("baselines reject the d2q kind and DDPG has one critic") {
    CHECK_THROWS_AS(make_baseline(AgentKind::D2Q, small_config(), kObs, kAct, kMax, 1), ConfigError);
    Agent d = make_baseline(AgentKind::DDPG, small_config(), kObs, kAct, kMax, 1);
    CHECK_FALSE(d.twin_critics());
    CHECK(d.named_networks().size() == 4);
    Rng rng(38);
    const auto stats = d.train_step(filled_buffer(50, 39), rng);
    CHECK(std::isnan(stats.q2_loss));
    CHECK(std::isnan(stats.corr_raw));
}

TEST_CASE("a large lambda lowers feature cosine on a fixed batch") {
    Rng rng(40);
    const replay::Batch b = random_batch(rng, 64);
    double cos_result[2];
    for (int v = 0; v < 2; ++v) {
        AgentConfig c = small_config();
        c.hidden = {16, 16};
        c.lambda = v == 0 ? 10.0 : 0.0;
        Agent a(c, kObs, kAct, kMax, 41);
        Rng r(42);
        double last = 0.0;
        for (int i = 0; i < 200; ++i) last = a.critic_update(b, a.compute_target(b, r).y).corr_raw;
        cos_result[v] = last;
    }
    CHECK(cos_result[0] < cos_result[1]);
}

TEST_CASE("non-finite targets raise a divergence error") {
    Agent a(small_config(), kObs, kAct, kMax, 43);
    Rng rng(44);
    const replay::Batch b = random_batch(rng, 8);
    std::vector<double> y(8, 0.0);
    y[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(a.critic_update(b, y), DivergenceError);
}
