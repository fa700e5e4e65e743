#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "doctest.h"
#include "sdar/check.hpp"
#include "sdar/errors.hpp"
#include "sdar/harness.hpp"

using namespace sdar;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("sdar-harness-" + name);
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

RunConfig tiny(const std::string& env = "builtin:point_mass") {
    RunConfig c;
    c.env = env;
    c.train.hidden = {8, 8};
    c.train.batch_size = 16;
    c.train.warmup_steps = 100;
    c.train.total_steps = 600;
    c.train.eval_every = 200;
    c.train.eval_episodes = 2;
    c.train.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("training run writes log, summary and checkpoint") {
    const auto dir = scratch("train");
    TrainRunOptions o;
    o.out_dir = dir.string();
    const auto r = run_training(tiny(), o);
    CHECK(r.finished);
    CHECK(r.steps == 600);
    CHECK(r.record.evals.size() == 3);
    CHECK(fs::exists(dir / "checkpoint.bin"));
    const auto log = read_run_log(r.log_path);
    CHECK(log.evals.size() == 3);
    CHECK(log.end_step == 600);
    CHECK(log.config_hash == tiny().hash());
    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    CHECK(summary["steps"] == 600);
    CHECK(summary["finished"] == true);
    CHECK(summary["wall_clock_seconds"].get<double>() > 0.0);
    CHECK(summary.contains("final_eval"));
    // No wall-clock in the log itself.
    CHECK(slurp(dir / "log.jsonl").find("wall") == std::string::npos);
}

TEST_CASE("stop condition ends a run after the triggering evaluation") {
    TrainRunOptions o;
    o.stop_when = [](const EvalRecord& r) { return r.step >= 400; };
    const auto r = run_training(tiny(), o);
    CHECK(r.steps == 400);
    CHECK_FALSE(r.finished);
    CHECK(r.record.evals.size() == 2);
}

TEST_CASE("checkpoint evaluation is reproducible and traces round trip") {
    const auto dir = scratch("eval");
    TrainRunOptions o;
    o.out_dir = dir.string();
    const auto run = run_training(tiny(), o);
    EvalRunOptions eo;
    eo.episodes = 3;
    eo.seed = 9;
    eo.traces_out = (dir / "traces.jsonl").string();
    const auto a = run_evaluation(run.checkpoint_path, eo);
    const auto b = run_evaluation(run.checkpoint_path, eo);
    CHECK(a.checkpoint_step == 600);
    CHECK(a.summary.return_mean == b.summary.return_mean);
    CHECK(a.summary.apr.apr == b.summary.apr.apr);
    const auto back = read_traces(eo.traces_out);
    REQUIRE(back.size() == 3);
    CHECK(back[1].actions == a.traces[1].actions);
    CHECK(back[1].schemas == a.traces[1].schemas);

    const auto files = export_selection_csv(back, (dir / "sel").string());
    REQUIRE(files.size() == 3);
    CHECK(read_selection_trace(files[0]) == back[0].schemas);

    const auto curve = (dir / "curve.csv").string();
    export_curve_csv(read_run_log(run.log_path), curve);
    const auto text = slurp(curve);
    CHECK(text.rfind("step,return_mean,return_stderr,apr,afr,alpha_beta,alpha_pi,critic_loss,train_return_mean,"
                     "apr_dim0",
                     0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("experiment matrix runs in parallel and aggregates") {
    const auto dir = scratch("matrix");
    MatrixSpec spec;
    spec.base = tiny();
    spec.base.train.total_steps = 400;
    spec.envs = {"builtin:point_mass"};
    spec.modes = {Mode::sdar, Mode::sac};
    spec.seeds = {1, 2};
    spec.out_dir = dir.string();
    spec.jobs = 2;
    const auto m = run_matrix(spec);
    REQUIRE(m.cells.size() == 2);
    CHECK(m.run_dirs.size() == 4);
    double best = 0.0;
    for (const auto& c : m.cells) {
        CHECK(c.auc.size() == 2);
        CHECK(c.auc_best_normalized > 0.0);
        CHECK(c.auc_best_normalized <= 1.0);
        best = std::max(best, c.auc_best_normalized);
    }
    CHECK(best == 1.0);
    // sac never repeats, so its APR is exactly 1.
    CHECK(m.cells[1].mode == Mode::sac);
    CHECK(m.cells[1].final_apr_mean == 1.0);

    // Sequential execution gives the same logs.
    auto seq = spec;
    seq.out_dir = (dir / "seq").string();
    seq.jobs = 1;
    const auto m2 = run_matrix(seq);
    for (std::size_t i = 0; i < m.run_dirs.size(); ++i)
        CHECK(slurp(fs::path(m.run_dirs[i]) / "log.jsonl") == slurp(fs::path(m2.run_dirs[i]) / "log.jsonl"));
    CHECK(format_matrix_table(m) == format_matrix_table(m2));
    write_matrix_csv(m, (dir / "m.csv").string());
    CHECK(slurp(dir / "m.csv").rfind("env,mode,seeds,auc_mean", 0) == 0);
}

TEST_CASE("fast self-checks pass") {
    const auto dir = scratch("checks");
    for (const char* name : {"repeat-invariant", "metrics", "temperature"}) {
        const auto r = run_check(name, dir.string());
        CHECK_MESSAGE(r.passed, format_check_line(r));
    }
    CHECK_THROWS_AS(run_check("nonsense", dir.string()), ConfigError);
}
