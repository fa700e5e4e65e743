#include <cmath>
#include <numbers>

#include "doctest.h"
#include "sdar/envs.hpp"
#include "sdar/errors.hpp"

using namespace sdar;

TEST_CASE("registry") {
    for (const auto& name : builtin_env_names()) {
        auto env = make_builtin_env(name);
        CHECK(env->spec().name == name);
        CHECK_NOTHROW(env->spec().validate());
    }
    CHECK_THROWS_AS(make_builtin_env("nope"), ConfigError);
    CHECK(make_builtin_env("mountain_car")->spec().max_episode_steps == 999);
    CHECK(make_builtin_env("pendulum")->spec().max_episode_steps == 200);
    const auto pm = make_builtin_env("point_mass");
    CHECK(pm->spec().max_episode_steps == 300);
    CHECK(pm->spec().act_dim == 4);
    CHECK(pm->spec().obs_dim == 9);
}

TEST_CASE("reset is deterministic in the seed") {
    for (const auto& name : builtin_env_names()) {
        auto a = make_builtin_env(name);
        auto b = make_builtin_env(name);
        CHECK(a->reset(7) == b->reset(7));
        CHECK(a->reset(7) != a->reset(8));
    }
}

TEST_CASE("mountain car reset range") {
    auto env = make_builtin_env("mountain_car");
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto obs = env->reset(s);
        CHECK(obs[0] >= -0.6);
        CHECK(obs[0] <= -0.4);
        CHECK(obs[1] == 0.0);
    }
}

TEST_CASE("point mass reset at origin with goal on the unit circle") {
    auto env = make_builtin_env("point_mass");
    for (std::uint64_t s = 0; s < 50; ++s) {
        const auto obs = env->reset(s);
        for (int i = 0; i < 4; ++i) CHECK(obs[static_cast<std::size_t>(i)] == 0.0);
        CHECK(std::hypot(obs[4], obs[5]) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(obs[8] == 0.0);
    }
}

TEST_CASE("mountain car one-step hand evaluation") {
    MountainCar env;
    env.set_state({-0.5, 0.0});
    const double a = 0.0;
    const auto r = env.step(std::span<const double>(&a, 1));
    const double v = -0.0025 * std::cos(3.0 * -0.5);
    CHECK(r.obs[1] == doctest::Approx(v).epsilon(1e-15));
    CHECK(r.obs[0] == doctest::Approx(-0.5 + v).epsilon(1e-15));
    CHECK(r.obs[0] < -0.5);
    CHECK(r.reward == 0.0);

    env.set_state({-0.3, 0.01});
    const double push = 0.8;
    const auto r2 = env.step(std::span<const double>(&push, 1));
    const double v2 = 0.01 + 0.0015 * 0.8 - 0.0025 * std::cos(-0.9);
    CHECK(r2.obs[1] == doctest::Approx(v2).epsilon(1e-15));
    CHECK(r2.reward == doctest::Approx(-0.1 * 0.64).epsilon(1e-15));
}

TEST_CASE("mountain car goal and left wall") {
    MountainCar env;
    env.set_state({0.44, 0.05});
    const double a = 1.0;
    const auto r = env.step(std::span<const double>(&a, 1));
    CHECK(r.terminated);
    CHECK(r.reward == doctest::Approx(100.0 - 0.1).epsilon(1e-15));

    env.set_state({-1.19, -0.05});
    const double b = -1.0;
    const auto w = env.step(std::span<const double>(&b, 1));
    CHECK(w.obs[0] == -1.2);
    CHECK(w.obs[1] == 0.0);
}

TEST_CASE("pendulum rest at the bottom is an equilibrium") {
    Pendulum env;
    env.set_state({std::numbers::pi, 0.0});
    const double a = 0.0;
    for (int i = 0; i < 5; ++i) {
        const auto r = env.step(std::span<const double>(&a, 1));
        CHECK(r.obs[0] == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(std::abs(r.obs[1]) < 1e-12);
        CHECK(std::abs(r.obs[2]) < 1e-12);
        CHECK(r.reward == doctest::Approx(-std::numbers::pi * std::numbers::pi).epsilon(1e-9));
    }
}

TEST_CASE("pendulum hand evaluation") {
    Pendulum env;
    env.set_state({0.4, -1.2});
    const double a = 0.5;
    const auto r = env.step(std::span<const double>(&a, 1));
    const double u = 1.0;
    const double thdot = -1.2 + (15.0 * std::sin(0.4) + 3.0 * u) * 0.05;
    const double th = 0.4 + thdot * 0.05;
    CHECK(r.obs[0] == doctest::Approx(std::cos(th)).epsilon(1e-14));
    CHECK(r.obs[1] == doctest::Approx(std::sin(th)).epsilon(1e-14));
    CHECK(r.obs[2] == doctest::Approx(thdot).epsilon(1e-14));
    CHECK(r.reward == doctest::Approx(-(0.16 + 0.1 * 1.44 + 0.001)).epsilon(1e-14));
}

TEST_CASE("point mass latches trim every fifth tick and charges command changes") {
    MultiRatePointMass env;
    env.reset(3);
    std::vector<double> a{0.0, 0.0, 0.5, -0.5};
    auto r = env.step(a);  // tick 0 latches
    CHECK(r.obs[6] == 0.5);
    CHECK(r.obs[7] == -0.5);
    CHECK(r.obs[8] == doctest::Approx(0.2));
    std::vector<double> b{0.0, 0.0, 0.9, -0.5};
    const auto before = r.obs;
    r = env.step(b);  // tick 1 holds the latched trim
    CHECK(r.obs[6] == 0.5);
    // One changed trim component costs the latch penalty.
    const double dist = std::hypot(r.obs[0] - r.obs[4], r.obs[1] - r.obs[5]);
    CHECK(r.reward == doctest::Approx(-dist - 0.05).epsilon(1e-14));
    for (int t = 2; t < 5; ++t) r = env.step(b);
    CHECK(r.obs[6] == 0.5);
    r = env.step(b);  // tick 5 latches
    CHECK(r.obs[6] == 0.9);
    (void)before;
}

TEST_CASE("truncation at the time limit and protocol errors") {
    auto env = make_builtin_env("pendulum");
    const double a = 0.0;
    CHECK_THROWS_AS(env->step(std::span<const double>(&a, 1)), ProtocolError);
    env->reset(1);
    StepResult r;
    for (int i = 0; i < 200; ++i) {
        r = env->step(std::span<const double>(&a, 1));
        if (i < 199) CHECK(!r.truncated);
    }
    CHECK(r.truncated);
    CHECK_THROWS_AS(env->step(std::span<const double>(&a, 1)), ProtocolError);
    env->reset(2);
    const std::vector<double> two{0.0, 0.0};
    CHECK_THROWS_AS(env->step(two), ProtocolError);
    const double nan = std::nan("");
    CHECK_THROWS_AS(env->step(std::span<const double>(&nan, 1)), ProtocolError);
}

TEST_CASE("out-of-range actions are clamped and counted") {
    auto a = make_builtin_env("mountain_car");
    auto b = make_builtin_env("mountain_car");
    a->reset(4);
    b->reset(4);
    const double big = 3.0;
    const double one = 1.0;
    CHECK(a->step(std::span<const double>(&big, 1)).obs == b->step(std::span<const double>(&one, 1)).obs);
    CHECK(a->clamp_count() == 1);
    CHECK(b->clamp_count() == 0);
}

TEST_CASE("snapshot and restore continue identically") {
    for (const auto& name : builtin_env_names()) {
        auto env = make_builtin_env(name);
        auto other = make_builtin_env(name);
        env->reset(9);
        const std::vector<double> a(env->spec().act_dim, 0.3);
        for (int i = 0; i < 7; ++i) env->step(a);
        other->restore(*env->snapshot());
        for (int i = 0; i < 7; ++i) {
            const auto x = env->step(a);
            const auto y = other->step(a);
            CHECK(x.obs == y.obs);
            CHECK(x.reward == y.reward);
        }
    }
}
