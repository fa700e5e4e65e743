#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sdar/checkpoint.hpp"
#include "sdar/env_bridge.hpp"
#include "sdar/errors.hpp"

using namespace sdar;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("sdar-ckpt-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

RunConfig small_run(const std::string& env, Precision precision = Precision::f64) {
    RunConfig c;
    c.env = env;
    c.train.hidden = {8, 8};
    c.train.batch_size = 16;
    c.train.warmup_steps = 50;
    c.train.total_steps = 400;
    c.train.eval_every = 0;
    c.train.replay_capacity = 1000;
    c.train.seed = 21;
    c.train.precision = precision;
    return c;
}

template <typename T>
bool same_bits(const ParamSet<T>& a, const ParamSet<T>& b) {
    const auto fa = a.flatten();
    const auto fb = b.flatten();
    return fa.size() == fb.size() && std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(T)) == 0;
}

template <typename T>
void check_same(Trainer<T>& a, Trainer<T>& b) {
    CHECK(a.step() == b.step());
    CHECK(same_bits(a.agent().policy.beta, b.agent().policy.beta));
    CHECK(same_bits(a.agent().policy.pi, b.agent().policy.pi));
    CHECK(same_bits(a.agent().critics.q1, b.agent().critics.q1));
    CHECK(same_bits(a.agent().critics.q2_targ, b.agent().critics.q2_targ));
    CHECK(a.agent().temps.log_alpha_beta == b.agent().temps.log_alpha_beta);
    CHECK(a.agent().opt_pi.step == b.agent().opt_pi.step);
    CHECK(a.replay().size() == b.replay().size());
    CHECK(a.policy_rng() == b.policy_rng());
    CHECK(a.replay_rng() == b.replay_rng());
}

template <typename T>
void resume_matches_straight_run(Precision precision) {
    const auto dir = scratch("resume-" + to_string(precision));
    const auto cfg = small_run("builtin:point_mass", precision);
    const auto path = (dir / "ck.bin").string();

    Trainer<T> straight(cfg.train, env_factory_from_uri(cfg.env));
    straight.train({}, 400);

    Trainer<T> first(cfg.train, env_factory_from_uri(cfg.env));
    first.train({}, 230);
    save_checkpoint(path, cfg, first);

    Trainer<T> second(cfg.train, env_factory_from_uri(cfg.env));
    const auto info = load_checkpoint(path, second);
    CHECK(info.step == 230);
    CHECK(info.has_env_state);
    check_same(first, second);
    CHECK(second.collector().obs == first.collector().obs);
    second.train({}, 400);
    check_same(straight, second);
}

}  // namespace

TEST_CASE("checkpoint resume is bit-identical to an uninterrupted run") {
    resume_matches_straight_run<double>(Precision::f64);
    resume_matches_straight_run<float>(Precision::f32);
}

TEST_CASE("checkpoint metadata") {
    const auto dir = scratch("info");
    auto cfg = small_run("builtin:pendulum");
    Trainer<double> t(cfg.train, env_factory_from_uri(cfg.env));
    t.train({}, 60);
    const auto path = (dir / "ck.bin").string();
    save_checkpoint(path, cfg, t);
    const auto info = read_checkpoint_info(path);
    CHECK(info.version == kCheckpointVersion);
    CHECK(info.precision == Precision::f64);
    CHECK(info.step == 60);
    CHECK(info.config.hash() == cfg.hash());
    CHECK(info.env.name == t.env_spec().name);
    CHECK_FALSE(fs::exists(path + ".tmp"));
}

TEST_CASE("corrupt or mismatched checkpoints are rejected") {
    const auto dir = scratch("corrupt");
    auto cfg = small_run("builtin:point_mass");
    Trainer<double> t(cfg.train, env_factory_from_uri(cfg.env));
    t.train({}, 60);
    const auto path = (dir / "ck.bin").string();
    save_checkpoint(path, cfg, t);

    SUBCASE("flipped byte") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(200);
        char c = 0;
        f.seekg(200);
        f.read(&c, 1);
        c ^= 0x10;
        f.seekp(200);
        f.write(&c, 1);
        f.close();
        Trainer<double> u(cfg.train, env_factory_from_uri(cfg.env));
        CHECK_THROWS_AS(load_checkpoint(path, u), IoError);
    }
    SUBCASE("truncated") {
        fs::resize_file(path, fs::file_size(path) / 2);
        CHECK_THROWS_AS(read_checkpoint_info(path), IoError);
    }
    SUBCASE("not a checkpoint") {
        std::ofstream(path) << "hello";
        CHECK_THROWS_AS(read_checkpoint_info(path), IoError);
    }
    SUBCASE("wrong precision") {
        Trainer<float> u(cfg.train, env_factory_from_uri(cfg.env));
        CHECK_THROWS_AS(load_checkpoint(path, u), ConfigError);
    }
    SUBCASE("wrong layout") {
        auto other = cfg;
        other.train.hidden = {8, 9};
        Trainer<double> u(other.train, env_factory_from_uri(other.env));
        CHECK_THROWS_AS(load_checkpoint(path, u), ConfigError);
    }
}

TEST_CASE("bridge environments resume at an episode boundary") {
    const auto dir = scratch("bridge");
    const auto cfg = small_run(std::string("bridge:") + SDAR_ECHO_ENV_PATH);
    const auto path = (dir / "ck.bin").string();
    Trainer<double> t(cfg.train, env_factory_from_uri(cfg.env));
    t.train({}, 75);
    save_checkpoint(path, cfg, t);
    Trainer<double> u(cfg.train, env_factory_from_uri(cfg.env));
    const auto info = load_checkpoint(path, u);
    CHECK_FALSE(info.has_env_state);
    CHECK(u.collector().need_reset);
    CHECK(u.replay().size() == 75);
    u.train({}, 120);
    CHECK(u.step() == 120);
}
