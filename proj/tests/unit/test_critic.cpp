#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "sdar/critic.hpp"
#include "sdar/errors.hpp"

using namespace sdar;

namespace {

Transition transition(std::vector<double> obs, std::vector<double> a_prev, std::vector<double> action, double r,
                      std::vector<double> next, bool terminal = false, bool truncated = false) {
    Transition t;
    t.obs = std::move(obs);
    t.a_prev = std::move(a_prev);
    t.action = std::move(action);
    t.reward = r;
    t.next_obs = std::move(next);
    t.terminal = terminal;
    t.truncated = truncated;
    return t;
}

PolicyNets<double> policy(std::size_t obs, std::size_t act, std::uint64_t seed) {
    PolicyLayout l;
    l.obs_dim = obs;
    l.act_dim = act;
    l.hidden = {8};
    Rng rng(seed);
    return PolicyNets<double>::init(l, rng);
}

CriticPair<double> critics(std::size_t obs, std::size_t act, std::uint64_t seed) {
    Rng rng(seed);
    return CriticPair<double>::init(obs, act, {8, 8}, rng);
}

Batch<double> random_batch(std::size_t obs, std::size_t act, int n, Rng& rng) {
    std::vector<Transition> rows;
    auto vec = [&](std::size_t k) {
        std::vector<double> v(k);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        return v;
    };
    for (int i = 0; i < n; ++i) rows.push_back(transition(vec(obs), vec(act), vec(act), rng.uniform(-1, 1), vec(obs)));
    return make_batch<double>(rows);
}

}  // namespace

TEST_CASE("targets start as copies of the online critics") {
    const auto c = critics(3, 2, 1);
    CHECK(c.q1_targ == c.q1);
    CHECK(c.q2_targ == c.q2);
    CHECK(!(c.q1 == c.q2));
}

TEST_CASE("q_value examples") {
    auto c = critics(3, 2, 1);
    Vector<double> s(3);
    s << 0.1, 0.2, 0.3;
    Vector<double> a(2);
    a << -0.5, 0.5;
    auto z = c.q1.zeros_like();
    CHECK(q_value(z, s, a) == 0.0);
    z.biases.back()(0) = 1.75;
    CHECK(q_value(z, s, a) == 1.75);
    const auto ref = oracle::straight_line_forward(c.q2, {0.1, 0.2, 0.3, -0.5, 0.5});
    CHECK(q_value(c.q2, s, a) == doctest::Approx(ref[0]).epsilon(1e-13));
}

TEST_CASE("terminal and zero-discount targets") {
    const auto p = policy(2, 1, 3);
    const auto c = critics(2, 1, 4);
    Rng rng(1);
    const auto b = make_batch<double>({transition({0.1, 0.2}, {0.0}, {0.3}, 1.0, {0.4, 0.5}, true)});
    TargetOptions o;
    CHECK(bellman_targets(b, p, c, o, rng)(0) == 1.0);

    const auto b2 = make_batch<double>({transition({0.1, 0.2}, {0.0}, {0.3}, -0.7, {0.4, 0.5})});
    o.gamma = 0.0;
    o.soft_target_entropy = false;
    CHECK(bellman_targets(b2, p, c, o, rng)(0) == -0.7);
}

TEST_CASE("target matches a hand evaluation with a recorded draw") {
    const auto p = policy(2, 1, 5);
    auto c = critics(2, 1, 6);
    c.q2_targ.biases.back()(0) += 0.05;
    const auto batch = make_batch<double>({transition({0.1, 0.2}, {0.0}, {0.3}, 0.25, {0.4, -0.5}, false, true)});
    TargetOptions o;
    o.gamma = 0.9;
    o.soft_target_entropy = false;

    Rng rng(123);
    Rng replay = rng;
    const double y = bellman_targets(batch, p, c, o, rng)(0);

    // Replay the draws by hand: one switch uniform, then one normal.
    const auto sel_logit = oracle::straight_line_forward(p.beta, {0.4, -0.5, 0.3})[0];
    const double prob = 1.0 / (1.0 + std::exp(-sel_logit));
    const bool acts = replay.uniform() < prob;
    const double noise = replay.normal();
    double a_next = 0.3;
    if (acts) {
        const auto head = oracle::straight_line_forward(p.pi, {0.4, -0.5, -2.0});
        const double ls = std::clamp(head[1], kLogStdMin, kLogStdMax);
        a_next = std::tanh(head[0] + std::exp(ls) * noise);
    }
    const double q1 = oracle::straight_line_forward(c.q1_targ, {0.4, -0.5, a_next})[0];
    const double q2 = oracle::straight_line_forward(c.q2_targ, {0.4, -0.5, a_next})[0];
    CHECK(y == doctest::Approx(0.25 + 0.9 * std::min(q1, q2)).epsilon(1e-12));
}

TEST_CASE("entropy bracket enters the soft target") {
    const auto p = policy(2, 2, 7);
    const auto c = critics(2, 2, 8);
    Rng data(4);
    const auto batch = random_batch(2, 2, 5, data);
    TargetOptions hard;
    hard.soft_target_entropy = false;
    TargetOptions soft;
    soft.alpha_beta = 0.3;
    soft.alpha_pi = 0.2;
    Rng r1(9);
    Rng r2(9);
    const auto yh = bellman_targets(batch, p, c, hard, r1);
    const auto ys = bellman_targets(batch, p, c, soft, r2);
    CHECK(r1 == r2);
    CHECK((yh - ys).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("tau = 1 makes target and online targets coincide") {
    const auto p = policy(2, 1, 3);
    auto c = critics(2, 1, 4);
    Rng data(2);
    const auto batch = random_batch(2, 1, 6, data);
    // Perturb the online nets, then copy them over.
    c.q1.biases[0].array() += 0.1;
    soft_update(c.q1_targ, c.q1, 1.0);
    soft_update(c.q2_targ, c.q2, 1.0);
    auto same = c;
    same.q1_targ = same.q1;
    same.q2_targ = same.q2;
    Rng r1(5);
    Rng r2(5);
    CHECK(bellman_targets(batch, p, c, TargetOptions{}, r1) == bellman_targets(batch, p, same, TargetOptions{}, r2));
}

TEST_CASE("critic loss examples") {
    auto c = critics(1, 1, 2);
    for (auto* q : {&c.q1, &c.q2}) {
        for (auto& w : q->weights) w.setZero();
        for (auto& b : q->biases) b.setZero();
    }
    const auto batch = make_batch<double>({transition({0.0}, {0.0}, {0.0}, 0.0, {0.0})});
    Vector<double> y(1);
    y << 2.0;
    const auto l = critic_loss_and_grads(c, batch, y);
    CHECK(l.loss_q1 == 4.0);
    CHECK(l.loss_q2 == 4.0);
    CHECK(l.loss == 4.0);

    y << 0.0;
    const auto z = critic_loss_and_grads(c, batch, y);
    CHECK(z.loss == 0.0);
    for (double v : z.grad_q1.flatten()) CHECK(v == 0.0);
}

TEST_CASE("critic gradients match finite differences") {
    auto c = critics(3, 2, 11);
    Rng data(3);
    const auto batch = random_batch(3, 2, 6, data);
    Vector<double> y(6);
    for (int i = 0; i < 6; ++i) y(i) = data.uniform(-2, 2);
    const auto l = critic_loss_and_grads(c, batch, y);
    const auto n1 = oracle::central_diff(c.q1, [&] { return critic_loss_and_grads(c, batch, y).loss; });
    const auto n2 = oracle::central_diff(c.q2, [&] { return critic_loss_and_grads(c, batch, y).loss; });
    CHECK(oracle::max_rel_err(l.grad_q1, n1) < 1e-4);
    CHECK(oracle::max_rel_err(l.grad_q2, n2) < 1e-4);
}
