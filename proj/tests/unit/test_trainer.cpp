#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "sdar/errors.hpp"
#include "sdar/trainer.hpp"

using namespace sdar;

namespace {

TrainConfig small_config(Mode mode = Mode::sdar) {
    TrainConfig c;
    c.mode = mode;
    c.hidden = {8, 8};
    c.batch_size = 16;
    c.warmup_steps = 10;
    c.total_steps = 120;
    c.eval_every = 0;
    c.replay_capacity = 1000;
    c.seed = 7;
    return c;
}

EnvFactory builtin(const char* name) {
    return [name] { return make_builtin_env(name); };
}

Batch<double> random_batch(std::size_t obs, std::size_t act, int n, Rng& rng) {
    std::vector<Transition> rows;
    auto vec = [&](std::size_t k) {
        std::vector<double> v(k);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        return v;
    };
    for (int i = 0; i < n; ++i) {
        Transition t;
        t.obs = vec(obs);
        t.a_prev = vec(act);
        t.action = vec(act);
        t.reward = rng.uniform(-1.0, 1.0);
        t.next_obs = vec(obs);
        rows.push_back(t);
    }
    return make_batch<double>(rows);
}

Agent<double> small_agent(std::size_t obs, std::size_t act, Mode mode, std::uint64_t seed) {
    EnvSpec spec{"synthetic", obs, act, 10};
    TrainConfig cfg = small_config(mode);
    Rng rng(seed);
    auto a = Agent<double>::init(spec, cfg, rng);
    a.temps.log_alpha_beta = std::log(0.3);
    a.temps.log_alpha_pi = std::log(0.2);
    return a;
}

}  // namespace

TEST_CASE("action objective gradient matches central differences") {
    auto agent = small_agent(3, 2, Mode::sdar, 11);
    Rng rng(5);
    const auto batch = random_batch(3, 2, 6, rng);
    UpdateOptions opts;
    const auto draw = draw_action_inputs(agent, batch, opts, rng);
    const auto res = action_policy_gradient(agent, batch, opts, draw);
    const auto num = oracle::central_diff(agent.policy.pi, [&] {
        return -action_policy_gradient(agent, batch, opts, draw).objective;
    });
    CHECK(oracle::max_rel_err(res.grad, num, 1e-6) < 1e-3);
}

TEST_CASE("exact selection gradient matches central differences") {
    for (Mode mode : {Mode::sdar, Mode::coupled}) {
        auto agent = small_agent(3, 2, mode, 12);
        Rng rng(6);
        const auto batch = random_batch(3, 2, 5, rng);
        UpdateOptions opts;
        const auto noise = draw_schema_noise(agent, batch.size(), rng);
        const auto res = selection_exact_gradient(agent, batch, opts, noise);
        const auto num = oracle::central_diff(agent.policy.beta, [&] {
            return -selection_exact_gradient(agent, batch, opts, noise).objective;
        });
        CHECK(oracle::max_rel_err(res.grad, num, 1e-6) < 1e-3);
    }
}

TEST_CASE("sampled selection gradient averages to the exact gradient") {
    auto agent = small_agent(2, 2, Mode::sdar, 13);
    Rng rng(7);
    const auto batch = random_batch(2, 2, 4, rng);
    UpdateOptions opts;
    const auto noise = draw_schema_noise(agent, batch.size(), rng);
    const auto exact = selection_exact_gradient(agent, batch, opts, noise).grad.flatten();

    const int draws = 20000;
    std::vector<double> sum(exact.size(), 0.0), sq(exact.size(), 0.0);
    Rng mc(8);
    for (int i = 0; i < draws; ++i) {
        const auto g = selection_sampled_gradient(agent, batch, opts, 1, mc, &noise).grad.flatten();
        for (std::size_t p = 0; p < g.size(); ++p) {
            sum[p] += g[p];
            sq[p] += g[p] * g[p];
        }
    }
    int outside = 0;
    for (std::size_t p = 0; p < exact.size(); ++p) {
        const double mean = sum[p] / draws;
        const double var = std::max(sq[p] / draws - mean * mean, 0.0);
        const double se = std::sqrt(var / draws);
        if (std::abs(mean - exact[p]) > 4.0 * se + 1e-12) ++outside;
    }
    CHECK(outside == 0);
}

TEST_CASE("temperature moves toward the entropy target") {
    TrainConfig cfg;
    auto temps = TemperatureState::make(2, 2, cfg);
    CHECK(temps.target_beta == doctest::Approx(0.5 * 2 * std::numbers::ln2));
    CHECK(temps.target_pi == -2.0);

    PolicyDraws<double> d;
    // entropy below target: -E[log p] < H
    d.log_beta = Vector<double>::Constant(4, -0.1);
    d.log_pi = Vector<double>::Constant(4, 3.0);
    const double b0 = temps.log_alpha_beta, p0 = temps.log_alpha_pi;
    update_temperatures(temps, d, 1e-3, true);
    CHECK(temps.log_alpha_beta > b0);
    CHECK(temps.log_alpha_pi > p0);

    auto high = TemperatureState::make(2, 2, cfg);
    d.log_beta = Vector<double>::Constant(4, -5.0);
    d.log_pi = Vector<double>::Constant(4, 1.0);
    update_temperatures(high, d, 1e-3, true);
    CHECK(high.log_alpha_beta < 0.0);
    CHECK(high.log_alpha_pi < 0.0);

    auto fixed = TemperatureState::make(2, 2, cfg);
    d.log_beta = Vector<double>::Constant(3, -fixed.target_beta);
    d.log_pi = Vector<double>::Constant(3, -fixed.target_pi);
    update_temperatures(fixed, d, 1e-3, true);
    CHECK(std::abs(fixed.log_alpha_beta) < 1e-12);
    CHECK(std::abs(fixed.log_alpha_pi) < 1e-12);

    auto frozen = TemperatureState::make(2, 2, cfg);
    d.log_beta = Vector<double>::Constant(3, -0.1);
    update_temperatures(frozen, d, 1e-3, false);
    CHECK(frozen.log_alpha_beta == 0.0);
}

TEST_CASE("update cadence follows the policy delay") {
    Trainer<double> tr(small_config(), builtin("pendulum"));
    tr.train({}, 10);
    const auto q0 = tr.agent().critics.q1;
    const auto pi0 = tr.agent().policy.pi;
    const auto beta0 = tr.agent().policy.beta;
    const auto targ0 = tr.agent().critics.q1_targ;

    tr.train_step({});  // step 11: critics only
    CHECK(!(tr.agent().critics.q1 == q0));
    CHECK(tr.agent().policy.pi == pi0);
    CHECK(tr.agent().policy.beta == beta0);
    CHECK(tr.agent().critics.q1_targ == targ0);
    CHECK(tr.agent().temps.log_alpha_pi == 0.0);

    tr.train_step({});  // step 12: everything
    CHECK(!(tr.agent().policy.pi == pi0));
    CHECK(!(tr.agent().policy.beta == beta0));
    CHECK(!(tr.agent().critics.q1_targ == targ0));
    CHECK(tr.agent().temps.log_alpha_pi != 0.0);
    CHECK(tr.agent().temps.log_alpha_beta != 0.0);
}

TEST_CASE("warmup leaves the networks untouched") {
    Trainer<double> tr(small_config(), builtin("pendulum"));
    const auto pi0 = tr.agent().policy.pi;
    const auto q0 = tr.agent().critics.q1;
    tr.train({}, 10);
    CHECK(tr.replay().size() == 10);
    CHECK(tr.agent().policy.pi == pi0);
    CHECK(tr.agent().critics.q1 == q0);
}

TEST_CASE("sac mode never touches the selection network") {
    Trainer<double> tr(small_config(Mode::sac), builtin("pendulum"));
    const auto beta0 = tr.agent().policy.beta;
    tr.train({}, 60);
    CHECK(tr.agent().policy.beta == beta0);
    CHECK(tr.agent().temps.log_alpha_beta == 0.0);
    CHECK(tr.last_schema().minCoeff() == 1);
}

TEST_CASE("collected schemas follow the mode") {
    SUBCASE("sdar acts on every dimension at episode start") {
        auto cfg = small_config();
        cfg.warmup_steps = 0;
        Trainer<double> tr(cfg, builtin("point_mass"));
        int starts = 0;
        for (int i = 0; i < 700; ++i) {
            const bool start = tr.collector().need_reset;
            const auto t = tr.collect_step();
            if (start) {
                ++starts;
                CHECK(tr.last_schema().minCoeff() == 1);
            }
            for (std::size_t d = 0; d < t.action.size(); ++d)
                if (!tr.last_schema()(static_cast<Eigen::Index>(d))) CHECK(t.action[d] == t.a_prev[d]);
        }
        CHECK(starts == 3);
    }
    SUBCASE("nrep acts every n steps") {
        auto cfg = small_config(Mode::nrep);
        cfg.warmup_steps = 0;
        cfg.nrep = 4;
        Trainer<double> tr(cfg, builtin("pendulum"));
        EpisodeTrace trace;
        trace.initial_action.assign(1, 0.0);
        for (int i = 0; i < 200; ++i) {
            const auto t = tr.collect_step();
            trace.actions.push_back(t.action);
            trace.rewards.push_back(t.reward);
            trace.schemas.emplace_back(tr.last_schema().data(), tr.last_schema().data() + 1);
            CHECK(tr.last_schema()(0) == (i % 4 == 0 ? 1 : 0));
        }
        const EpisodeTrace traces[] = {trace};
        CHECK(apr(traces).apr == doctest::Approx(4.0).epsilon(1e-12));
    }
}

TEST_CASE("transitions chain within an episode") {
    Trainer<double> tr(small_config(), builtin("pendulum"));
    auto prev = tr.collect_step();
    for (int i = 1; i < 400; ++i) {
        const bool start = tr.collector().need_reset;
        const auto t = tr.collect_step();
        if (start) {
            CHECK(t.a_prev == std::vector<double>{0.0});
        } else {
            CHECK(t.obs == prev.next_obs);
            CHECK(t.a_prev == prev.action);
        }
        prev = t;
    }
    CHECK(tr.collector().episodes == 2);
}

TEST_CASE("training is deterministic for a seed") {
    auto run = [](std::uint64_t seed) {
        auto cfg = small_config();
        cfg.seed = seed;
        cfg.eval_every = 40;
        cfg.eval_episodes = 1;
        Trainer<double> tr(cfg, builtin("point_mass"));
        std::vector<double> returns;
        tr.train([&](const EvalRecord& r) { returns.push_back(r.eval.return_mean); });
        auto flat = tr.agent().policy.pi.flatten();
        const auto q = tr.agent().critics.q2.flatten();
        flat.insert(flat.end(), q.begin(), q.end());
        flat.insert(flat.end(), returns.begin(), returns.end());
        return flat;
    };
    CHECK(run(3) == run(3));
    CHECK(run(3) != run(4));
}

TEST_CASE("evaluation records arrive on the configured cadence") {
    auto cfg = small_config();
    cfg.eval_every = 30;
    cfg.eval_episodes = 2;
    Trainer<double> tr(cfg, builtin("pendulum"));
    std::vector<std::int64_t> steps;
    tr.train([&](const EvalRecord& r) {
        steps.push_back(r.step);
        CHECK(r.eval.episodes == 2);
        CHECK(r.alpha_pi > 0.0);
    });
    CHECK(steps == std::vector<std::int64_t>{30, 60, 90, 120});
}

TEST_CASE("coupled mode shares one switch across dimensions") {
    auto cfg = small_config(Mode::coupled);
    cfg.warmup_steps = 0;
    Trainer<double> tr(cfg, builtin("point_mass"));
    CHECK(tr.agent().temps.target_beta == doctest::Approx(0.5 * std::numbers::ln2));
    for (int i = 0; i < 100; ++i) {
        tr.collect_step();
        const auto& s = tr.last_schema();
        CHECK((s.minCoeff() == s.maxCoeff()));
    }
}

TEST_CASE("exact update beyond the enumeration cap is rejected") {
    auto cfg = small_config();
    cfg.beta_update = BetaUpdate::exact;
    cfg.enum_cap = 3;
    CHECK_THROWS_AS(Trainer<double>(cfg, builtin("point_mass")), ConfigError);
    cfg.beta_update = BetaUpdate::automatic;
    Trainer<double> tr(cfg, builtin("point_mass"));
    CHECK(cfg.resolved_beta_update(4) == BetaUpdate::sampled);
}

TEST_CASE("config validation and parsing") {
    TrainConfig c;
    c.policy_delay = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = TrainConfig{};
    c.xi = 0.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK(parse_mode("coupled") == Mode::coupled);
    CHECK_THROWS_AS(parse_mode("td3"), ConfigError);
    CHECK(parse_beta_update("auto") == BetaUpdate::automatic);
    CHECK(parse_precision("float") == Precision::f32);
}

TEST_CASE("float trainer runs") {
    Trainer<float> tr(small_config(), builtin("mountain_car"));
    tr.train({});
    CHECK(tr.step() == 120);
    CHECK(tr.agent().policy.pi.all_finite());
}
