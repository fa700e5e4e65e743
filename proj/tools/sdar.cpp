// sdar: train, evaluate, run experiment matrices, self-check and export.
//
// Exit codes: 0 success, 1 runtime failure (or a failed check), 2 usage or config error.

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <unistd.h>

#include "sdar/check.hpp"
#include "sdar/config.hpp"
#include "sdar/errors.hpp"
#include "sdar/harness.hpp"

using namespace sdar;
namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
    std::string preset = "default";
    std::string file;
    std::string env;
    std::string mode;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> steps;
    std::vector<std::string> set;

    void attach(CLI::App* app) {
        app->add_option("--preset", preset, "Named starting configuration")->capture_default_str();
        app->add_option("--config", file, "Config file ([run], [agent], [optimizer] sections)");
        app->add_option("--env", env, "builtin:<name>, bridge:<command> or a built-in name");
        app->add_option("--mode", mode, "sdar, sac, nrep or coupled");
        app->add_option("--seed", seed, "Run seed");
        app->add_option("--steps", steps, "Total environment steps");
        app->add_option("--set", set, "Override one key: section.key=value (repeatable)");
    }

    RunConfig build() const {
        RunConfig c = preset_cfg();
        if (!file.empty()) c = load_config_file(file, c);
        if (!env.empty()) c.env = env;
        if (!mode.empty()) c.train.mode = parse_mode(mode);
        if (seed) c.train.seed = *seed;
        if (steps) c.train.total_steps = *steps;
        for (const auto& s : set) {
            const auto eq = s.find('=');
            const auto dot = s.find('.');
            if (eq == std::string::npos || dot == std::string::npos || dot > eq)
                throw ConfigError("--set expects section.key=value, got '" + s + "'");
            apply_setting(c, s.substr(0, dot), s.substr(dot + 1, eq - dot - 1), s.substr(eq + 1));
        }
        c.train.validate();
        return c;
    }

    RunConfig preset_cfg() const { return preset.empty() ? RunConfig{} : sdar::preset(preset); }
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto piece = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        if (!piece.empty()) out.push_back(piece);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("sdar");
    logger->set_pattern("[%H:%M:%S] %^%l%$ %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("SDAR_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(lvl));
}

nlohmann::json summary_json(const EvalSummary& s) {
    return {{"return_mean", s.return_mean}, {"return_stderr", s.return_stderr}, {"apr", s.apr.apr},
            {"apr_per_dim", s.apr.apr_per_dim}, {"afr", s.afr}, {"episodes", s.episodes}};
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Act-or-repeat reinforcement learning agent"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Train one agent");
    ConfigFlags train_cfg;
    train_cfg.attach(train);
    std::string out_dir, resume;
    std::int64_t stop_at = -1, checkpoint_every = 0;
    std::optional<double> stop_at_return;
    bool print_config = false;
    train->add_option("--out", out_dir, "Run directory (log.jsonl, summary.json, checkpoint.bin)");
    train->add_option("--resume", resume, "Continue from a checkpoint");
    train->add_option("--stop-at", stop_at, "Stop after this many total steps");
    train->add_option("--stop-at-return", stop_at_return,
                      "Stop after the first evaluation whose mean return reaches this value");
    train->add_option("--checkpoint-every", checkpoint_every, "Also checkpoint every N steps");
    train->add_flag("--print-config", print_config, "Print the resolved config and exit");

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string eval_ckpt, traces_out;
    EvalRunOptions eval_opts;
    bool stochastic = false;
    eval->add_option("checkpoint", eval_ckpt, "Checkpoint file")->required();
    eval->add_option("--episodes", eval_opts.episodes, "Episodes")->capture_default_str();
    eval->add_option("--seed", eval_opts.seed, "Evaluation seed")->capture_default_str();
    eval->add_flag("--stochastic", stochastic, "Sample actions and schemas instead of the greedy policy");
    eval->add_option("--traces", traces_out, "Write per-episode traces (JSONL)");

    // matrix
    auto* matrix = app.add_subcommand("matrix", "Run every (env, mode, seed) combination and tabulate");
    ConfigFlags matrix_cfg;
    matrix_cfg.attach(matrix);
    std::string envs = "builtin:mountain_car", modes = "sdar,sac", seeds = "0,1,2", matrix_out, matrix_csv;
    int jobs = 1;
    bool aggregate_only = false;
    matrix->add_option("--envs", envs, "Comma-separated environments")->capture_default_str();
    matrix->add_option("--modes", modes, "Comma-separated modes")->capture_default_str();
    matrix->add_option("--seeds", seeds, "Comma-separated seeds")->capture_default_str();
    matrix->add_option("--out", matrix_out, "Output directory")->required();
    matrix->add_option("--jobs", jobs, "Concurrent runs")->capture_default_str();
    matrix->add_option("--csv", matrix_csv, "Write the table as CSV");
    matrix->add_flag("--aggregate-only", aggregate_only, "Tabulate existing runs without training");

    // check
    auto* check = app.add_subcommand("check", "Run the property self-checks");
    std::vector<std::string> names;
    std::string scratch;
    check->add_option("names", names, "Checks to run (default: all)");
    check->add_option("--scratch", scratch, "Scratch directory (default: a temporary directory)");

    // export
    auto* exp = app.add_subcommand("export", "Export CSV files");
    exp->require_subcommand(1);
    auto* exp_curve = exp->add_subcommand("curve", "Learning curve from a run log");
    std::string curve_log, curve_out;
    exp_curve->add_option("log", curve_log, "log.jsonl")->required();
    exp_curve->add_option("--out", curve_out, "CSV path")->required();
    auto* exp_sel = exp->add_subcommand("selection", "Act-or-repeat rasters from eval traces");
    std::string sel_traces, sel_prefix;
    exp_sel->add_option("traces", sel_traces, "Traces written by eval --traces")->required();
    exp_sel->add_option("--prefix", sel_prefix, "Output prefix; one <prefix>_ep<k>.csv per episode")->required();

    // config
    auto* show = app.add_subcommand("config", "Print a resolved config, or the recognised keys");
    ConfigFlags show_cfg;
    show_cfg.attach(show);
    bool list_keys = false;
    show->add_flag("--keys", list_keys, "List every section.key");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*train) {
            RunConfig cfg = train_cfg.build();
            if (print_config) {
                std::cout << cfg.to_file_text();
                return 0;
            }
            TrainRunOptions o;
            o.out_dir = out_dir.empty() ? run_dir_name(cfg) : out_dir;
            o.resume_from = resume;
            o.stop_at = stop_at;
            o.checkpoint_every = checkpoint_every;
            if (stop_at_return)
                o.stop_when = [x = *stop_at_return](const EvalRecord& r) { return r.eval.return_mean >= x; };
            const auto r = run_training(cfg, o);
            nlohmann::json j{{"run_id", r.record.run_id}, {"steps", r.steps}, {"finished", r.finished},
                             {"wall_clock_seconds", r.wall_clock_seconds}, {"log", r.log_path},
                             {"checkpoint", r.checkpoint_path}};
            if (!r.record.evals.empty()) j["final_eval"] = summary_json(r.record.evals.back().eval);
            std::cout << j.dump(2) << '\n';
        } else if (*eval) {
            eval_opts.deterministic = !stochastic;
            eval_opts.traces_out = traces_out;
            const auto r = run_evaluation(eval_ckpt, eval_opts);
            nlohmann::json j = summary_json(r.summary);
            j["checkpoint_step"] = r.checkpoint_step;
            std::cout << j.dump(2) << '\n';
        } else if (*matrix) {
            MatrixSpec spec;
            spec.base = matrix_cfg.build();
            spec.envs = split_list(envs);
            for (const auto& m : split_list(modes)) spec.modes.push_back(parse_mode(m));
            for (const auto& s : split_list(seeds)) spec.seeds.push_back(std::stoull(s));
            spec.out_dir = matrix_out;
            spec.jobs = jobs;
            const auto m = aggregate_only ? aggregate_matrix(spec) : run_matrix(spec);
            std::cout << format_matrix_table(m);
            if (!matrix_csv.empty()) write_matrix_csv(m, matrix_csv);
        } else if (*check) {
            if (names.empty()) names = check_names();
            fs::path dir = scratch.empty() ? fs::temp_directory_path() / fmt::format("sdar-check-{}", ::getpid())
                                           : fs::path(scratch);
            fs::create_directories(dir);
            if (!std::getenv("SDAR_LOG_LEVEL")) spdlog::set_level(spdlog::level::warn);
            bool ok = true;
            for (const auto& n : names) {
                const auto r = run_check(n, dir.string());
                std::cout << format_check_line(r) << std::endl;
                ok = ok && r.passed;
            }
            if (scratch.empty()) fs::remove_all(dir);
            return ok ? 0 : 1;
        } else if (*exp_curve) {
            export_curve_csv(read_run_log(curve_log), curve_out);
        } else if (*exp_sel) {
            for (const auto& p : export_selection_csv(read_traces(sel_traces), sel_prefix)) std::cout << p << '\n';
        } else if (*show) {
            if (list_keys) {
                for (const auto& k : config_keys()) std::cout << k << '\n';
            } else {
                std::cout << show_cfg.build().to_file_text();
            }
        }
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        spdlog::error("bad number: {}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
