#include "doctest.h"
#include "sdar/config.hpp"
#include "sdar/errors.hpp"

using namespace sdar;

TEST_CASE("config text sets keys by section") {
    const auto c = parse_config_text(R"(
[run]
env = "builtin:pendulum"
seed = 17
total_steps = 2500

[agent]
mode = "coupled"
lambda = 0.25
hidden = [32, 16]

[optimizer]
batch_size = 64
lr_q = 5e-4
)");
    CHECK(c.env == "builtin:pendulum");
    CHECK(c.train.seed == 17);
    CHECK(c.train.total_steps == 2500);
    CHECK(c.train.mode == Mode::coupled);
    CHECK(c.train.lambda == 0.25);
    CHECK(c.train.hidden == std::vector<std::size_t>{32, 16});
    CHECK(c.train.batch_size == 64);
    CHECK(c.train.lr_q == 5e-4);
    // untouched keys keep their defaults
    CHECK(c.train.gamma == 0.99);
}

TEST_CASE("key order does not change the hash") {
    const auto a = parse_config_text("[run]\nseed = 3\ntotal_steps = 10\n[agent]\nlambda = 0.4\n");
    const auto b = parse_config_text("[agent]\nlambda = 0.4\n[run]\ntotal_steps = 10\nseed = 3\n");
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 64);
    auto c = a;
    c.train.seed = 4;
    CHECK(c.hash() != a.hash());
}

TEST_CASE("file text and json round trip") {
    RunConfig c = preset("paper-desk-point-mass");
    c.train.hidden = {7, 9, 11};
    c.train.xi = -3.5;
    c.train.soft_target_entropy = false;
    const auto back = parse_config_text(c.to_file_text());
    CHECK(back.to_json() == c.to_json());
    CHECK(RunConfig::from_json(c.to_json()).hash() == c.hash());
}

TEST_CASE("bad config input is rejected") {
    CHECK_THROWS_AS(parse_config_text("[run]\nsede = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[agent]\nmode = \"sometimes\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[optimizer]\nbatch_size = many\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[agent]\nxi = 0.5\n"), ConfigError);  // inside the action range
    CHECK_THROWS_AS(preset("no-such-preset"), ConfigError);
    CHECK_THROWS_AS(load_config_file("/nonexistent/run.toml"), IoError);
}

TEST_CASE("presets") {
    const auto desk = preset("paper-desk");
    CHECK(desk.env == "builtin:mountain_car");
    CHECK(desk.train.mode == Mode::sdar);
    CHECK(desk.train.total_steps == 100000);
    CHECK(desk.train.lambda == 0.5);
    CHECK(desk.train.batch_size == 256);
    const auto pm = preset("paper-desk-point-mass");
    CHECK(pm.env == "builtin:point_mass");
    for (const auto& name : preset_names()) CHECK_NOTHROW(preset(name));
}

TEST_CASE("every listed key is settable") {
    const auto keys = config_keys();
    CHECK(keys.size() > 25);
    RunConfig c;
    CHECK_NOTHROW(apply_setting(c, "run", "eval_every", "123"));
    CHECK(c.train.eval_every == 123);
    CHECK_THROWS_AS(apply_setting(c, "run", "lambda", "0.1"), ConfigError);
}

TEST_CASE("sha256 test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
