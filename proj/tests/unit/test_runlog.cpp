#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sdar/errors.hpp"
#include "sdar/runlog.hpp"

using namespace sdar;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("sdar-runlog-" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

EvalRecord record(std::int64_t step) {
    EvalRecord r;
    r.step = step;
    r.eval.return_mean = -1.0 / 3.0 + static_cast<double>(step);
    r.eval.return_stderr = 0.1;
    r.eval.apr.p = 0.25;
    r.eval.apr.apr = 4.0 / 3.0;
    r.eval.apr.p_per_dim = {0.5, 0.0};
    r.eval.apr.apr_per_dim = {2.0, 1.0};
    r.eval.afr = 0.7;
    r.eval.episodes = 3;
    r.alpha_beta = 0.123456789012345678;
    r.alpha_pi = 1e-300;
    r.critic_loss = 2.5;
    r.train_episodes = step / 100;
    r.train_return_mean = -7.25;
    return r;
}

const EnvSpec kSpec{"point_mass", 6, 2, 200, -10.0, 0.0};

}  // namespace

TEST_CASE("run log round trip") {
    const auto dir = scratch("roundtrip");
    const auto path = (dir / "log.jsonl").string();
    RunConfig cfg;
    cfg.train.seed = 11;
    {
        RunLogWriter w(path, cfg, kSpec);
        w.write(record(100));
        w.write(record(200));
        w.finish(200);
    }
    const auto r = read_run_log(path);
    CHECK(r.run_id == make_run_id(cfg));
    CHECK(r.config_hash == cfg.hash());
    CHECK(r.seed == 11);
    CHECK(r.env.obs_dim == 6);
    REQUIRE(r.evals.size() == 2);
    CHECK(r.evals[1].alpha_beta == record(200).alpha_beta);
    CHECK(r.evals[1].alpha_pi == 1e-300);
    CHECK(r.evals[0].eval.apr.apr_per_dim == std::vector<double>{2.0, 1.0});
    CHECK(r.end_step == 200);
    CHECK(render_run_log(r) == slurp(path));
    const auto curve = return_curve(r);
    CHECK(curve.size() == 2);
    CHECK(curve[0].first == 100.0);
}

TEST_CASE("eval record json round trip is exact") {
    const auto r = record(12345);
    const auto back = eval_from_json(eval_json(r));
    CHECK(back.step == r.step);
    CHECK(back.eval.return_mean == r.eval.return_mean);
    CHECK(back.eval.apr.apr == r.eval.apr.apr);
    CHECK(back.eval.apr.p_per_dim == r.eval.apr.p_per_dim);
    CHECK(back.alpha_beta == r.alpha_beta);
    CHECK(back.train_return_mean == r.train_return_mean);
}

TEST_CASE("resume keeps records up to the checkpoint step") {
    const auto dir = scratch("resume");
    const auto path = (dir / "log.jsonl").string();
    RunConfig cfg;
    {
        RunLogWriter w(path, cfg, kSpec);
        for (int s : {100, 200, 300}) w.write(record(s));
    }
    {
        auto w = RunLogWriter::resume(path, 200);
        w.write(record(300));
        w.finish(300);
    }
    std::string straight;
    {
        const auto other = (dir / "straight.jsonl").string();
        RunLogWriter w(other, cfg, kSpec);
        for (int s : {100, 200, 300}) w.write(record(s));
        w.finish(300);
        straight = slurp(other);
    }
    CHECK(slurp(path) == straight);
}

TEST_CASE("malformed logs name the line") {
    const auto dir = scratch("bad");
    const auto path = (dir / "log.jsonl").string();
    {
        RunLogWriter w(path, RunConfig{}, kSpec);
        w.write(record(100));
    }
    {
        std::ofstream out(path, std::ios::app);
        out << "{not json\n";
    }
    try {
        read_run_log(path);
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find(":3:") != std::string::npos);
    }
    CHECK_THROWS_AS(read_run_log((dir / "missing.jsonl").string()), IoError);
}
