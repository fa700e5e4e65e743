#include "sdar/harness.hpp"

#include <spdlog/spdlog.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "sdar/checkpoint.hpp"
#include "sdar/errors.hpp"

namespace sdar {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

double read_previous_wall_clock(const fs::path& summary) {
    std::ifstream in(summary);
    if (!in) return 0.0;
    try {
        return json::parse(in).value("wall_clock_seconds", 0.0);
    } catch (const json::exception&) {
        return 0.0;
    }
}

void write_summary(const fs::path& path, const TrainRunResult& r, const RunConfig& cfg) {
    json j;
    j["run_id"] = r.record.run_id;
    j["config_hash"] = cfg.hash();
    j["seed"] = cfg.train.seed;
    j["env"] = cfg.env;
    j["mode"] = to_string(cfg.train.mode);
    j["steps"] = r.steps;
    j["finished"] = r.finished;
    j["wall_clock_seconds"] = r.wall_clock_seconds;
    if (!r.record.evals.empty()) {
        const auto& last = r.record.evals.back();
        j["final_eval"] = eval_json(last);
        double best = last.eval.return_mean;
        for (const auto& e : r.record.evals) best = std::max(best, e.eval.return_mean);
        j["best_return_mean"] = best;
    }
    std::ofstream out(path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("cannot write run summary '" + path.string() + "'");
}

template <typename T>
TrainRunResult train_impl(const RunConfig& cfg, const TrainRunOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    Trainer<T> tr(cfg.train, env_factory_from_uri(cfg.env, opts.bridge));
    TrainRunResult res;
    if (!opts.resume_from.empty()) {
        load_checkpoint(opts.resume_from, tr);
        spdlog::info("resumed {} at step {}", opts.resume_from, tr.step());
    }

    std::optional<RunLogWriter> writer;
    fs::path dir;
    double previous_wall = 0.0;
    if (!opts.out_dir.empty()) {
        dir = opts.out_dir;
        fs::create_directories(dir);
        res.log_path = (dir / "log.jsonl").string();
        res.checkpoint_path = (dir / "checkpoint.bin").string();
        if (opts.resume_from.empty()) {
            writer.emplace(res.log_path, cfg, tr.env_spec());
        } else {
            writer.emplace(RunLogWriter::resume(res.log_path, tr.step()));
            res.record = read_run_log(res.log_path);
            previous_wall = read_previous_wall_clock(dir / "summary.json");
        }
    }
    if (res.record.run_id.empty()) {
        const json h = header_json(cfg, tr.env_spec());
        res.record.run_id = h["run_id"];
        res.record.config_hash = h["config_hash"];
        res.record.seed = cfg.train.seed;
        res.record.config = h["config"];
        res.record.env = tr.env_spec();
    }

    const std::int64_t total = cfg.train.total_steps;
    const std::int64_t until = opts.stop_at >= 0 ? std::min(opts.stop_at, total) : total;
    spdlog::info("run {}: {} steps on {} ({} precision)", res.record.run_id, total, cfg.env,
                 to_string(cfg.train.precision));
    bool stop = false;
    const RecordSink sink = [&](const EvalRecord& r) {
        if (writer) writer->write(r);
        res.record.evals.push_back(r);
        std::string per_dim;
        for (double a : r.eval.apr.apr_per_dim) per_dim += fmt::format(" {:.2f}", a);
        spdlog::info("step {:>7}  return {:9.3f} +- {:.3f}  apr {:.2f} [{} ]  alpha_beta {:.4f}  alpha_pi {:.4f}",
                     r.step, r.eval.return_mean, r.eval.return_stderr, r.eval.apr.apr, per_dim, r.alpha_beta,
                     r.alpha_pi);
        if (opts.stop_when && opts.stop_when(r)) stop = true;
    };
    while (tr.step() < until && !stop) {
        tr.train_step(sink);
        if (opts.checkpoint_every > 0 && tr.step() % opts.checkpoint_every == 0 && !dir.empty())
            save_checkpoint(res.checkpoint_path, cfg, tr);
    }
    res.steps = tr.step();
    res.finished = tr.step() >= total;
    if (res.finished) {
        if (writer) writer->finish(tr.step());
        res.record.end_step = tr.step();
    }
    res.wall_clock_seconds =
        previous_wall + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.record.wall_clock_seconds = res.wall_clock_seconds;
    if (!dir.empty()) {
        if (opts.write_checkpoint) save_checkpoint(res.checkpoint_path, cfg, tr);
        write_summary(dir / "summary.json", res, cfg);
    }
    return res;
}

template <typename T>
EvalRunResult eval_impl(const std::string& path, const CheckpointInfo& info, const EvalRunOptions& opts) {
    Trainer<T> tr(info.config.train, env_factory_from_uri(info.config.env, opts.bridge));
    load_checkpoint(path, tr);
    const auto& cfg = info.config.train;
    EvalOptions eo;
    eo.mode = cfg.mode;
    eo.nrep = cfg.nrep;
    eo.deterministic = opts.deterministic;
    eo.mask_pi_entropy = cfg.mask_pi_entropy;
    auto env = env_factory_from_uri(info.config.env, opts.bridge)();
    Rng rng(derive_seed(derive_seed(opts.seed, Stream::eval), static_cast<std::uint64_t>(info.step)));
    EvalRunResult out;
    out.traces = evaluate(tr.agent().policy, *env, opts.episodes, eo, rng);
    out.summary = summarize(out.traces);
    out.checkpoint_step = info.step;
    return out;
}

std::string csv_number(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

}  // namespace

std::string run_dir_name(const RunConfig& cfg) { return make_run_id(cfg); }

TrainRunResult run_training(const RunConfig& cfg_in, const TrainRunOptions& opts) {
    RunConfig cfg = cfg_in;
    if (!opts.resume_from.empty()) cfg = read_checkpoint_info(opts.resume_from).config;
    cfg.train.validate();
    if (cfg.train.precision == Precision::f32) return train_impl<float>(cfg, opts);
    return train_impl<double>(cfg, opts);
}

EvalRunResult run_evaluation(const std::string& checkpoint, const EvalRunOptions& opts) {
    if (opts.episodes < 1) throw ConfigError("evaluation needs at least one episode");
    const CheckpointInfo info = read_checkpoint_info(checkpoint);
    EvalRunResult r = info.precision == Precision::f32 ? eval_impl<float>(checkpoint, info, opts)
                                                        : eval_impl<double>(checkpoint, info, opts);
    if (!opts.traces_out.empty()) write_traces(r.traces, opts.traces_out);
    return r;
}

void write_traces(const std::vector<EpisodeTrace>& traces, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write traces '" + path + "'");
    for (const auto& t : traces) {
        json j;
        j["initial_action"] = t.initial_action;
        j["actions"] = t.actions;
        j["schemas"] = t.schemas;
        j["rewards"] = t.rewards;
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("trace write failed for '" + path + "'");
}

std::vector<EpisodeTrace> read_traces(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read traces '" + path + "'");
    std::vector<EpisodeTrace> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            EpisodeTrace t;
            t.initial_action = j.at("initial_action").get<std::vector<double>>();
            t.actions = j.at("actions").get<std::vector<std::vector<double>>>();
            t.schemas = j.at("schemas").get<std::vector<std::vector<std::uint8_t>>>();
            t.rewards = j.at("rewards").get<std::vector<double>>();
            t.validate();
            out.push_back(std::move(t));
        } catch (const json::exception& e) {
            throw ConfigError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

namespace {

std::vector<RunConfig> matrix_configs(const MatrixSpec& spec) {
    if (spec.envs.empty() || spec.modes.empty() || spec.seeds.empty())
        throw ConfigError("matrix needs at least one env, mode and seed");
    std::vector<RunConfig> out;
    for (const auto& env : spec.envs)
        for (Mode m : spec.modes)
            for (auto seed : spec.seeds) {
                RunConfig c = spec.base;
                c.env = env;
                c.train.mode = m;
                c.train.seed = seed;
                c.train.validate();
                out.push_back(c);
            }
    return out;
}

}  // namespace

MatrixResult run_matrix(const MatrixSpec& spec) {
    if (spec.out_dir.empty()) throw ConfigError("matrix needs an output directory");
    const auto configs = matrix_configs(spec);
    fs::create_directories(spec.out_dir);
    const int jobs = std::max(1, spec.jobs);
    if (jobs == 1) {
        for (const auto& c : configs) {
            TrainRunOptions o;
            o.out_dir = (fs::path(spec.out_dir) / run_dir_name(c)).string();
            run_training(c, o);
        }
        return aggregate_matrix(spec);
    }
    std::size_t next = 0;
    std::map<pid_t, std::string> running;
    std::vector<std::string> failed;
    auto reap = [&] {
        int status = 0;
        const pid_t pid = ::wait(&status);
        if (pid <= 0) return;
        const auto it = running.find(pid);
        if (it == running.end()) return;
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) failed.push_back(it->second);
        running.erase(it);
    };
    while (next < configs.size() || !running.empty()) {
        while (next < configs.size() && static_cast<int>(running.size()) < jobs) {
            const RunConfig c = configs[next++];
            const std::string dir = (fs::path(spec.out_dir) / run_dir_name(c)).string();
            std::fflush(nullptr);
            const pid_t pid = ::fork();
            if (pid < 0) throw IoError("matrix: fork failed");
            if (pid == 0) {
                int code = 0;
                try {
                    TrainRunOptions o;
                    o.out_dir = dir;
                    run_training(c, o);
                } catch (const std::exception& e) {
                    spdlog::error("{}: {}", dir, e.what());
                    code = 1;
                }
                std::fflush(nullptr);
                ::_exit(code);
            }
            running.emplace(pid, dir);
        }
        if (!running.empty()) reap();
    }
    if (!failed.empty()) {
        std::string msg = "matrix: runs failed:";
        for (const auto& f : failed) msg += " " + f;
        throw IoError(msg);
    }
    return aggregate_matrix(spec);
}

MatrixResult aggregate_matrix(const MatrixSpec& spec) {
    MatrixResult m;
    const auto configs = matrix_configs(spec);
    std::map<std::pair<std::string, Mode>, MatrixCell> cells;
    std::vector<std::pair<std::string, Mode>> order;
    for (const auto& c : configs) {
        const std::string dir = (fs::path(spec.out_dir) / run_dir_name(c)).string();
        m.run_dirs.push_back(dir);
        const RunRecord r = read_run_log((fs::path(dir) / "log.jsonl").string());
        if (r.evals.empty()) throw ConfigError("run " + dir + " has no evaluation records");
        const auto key = std::make_pair(c.env, c.train.mode);
        if (!cells.count(key)) order.push_back(key);
        auto& cell = cells[key];
        cell.env = c.env;
        cell.mode = c.train.mode;
        const auto curve = return_curve(r);
        cell.auc.push_back(curve.size() >= 2 ? auc(curve) : curve.front().second);
        cell.final_return.push_back(r.evals.back().eval.return_mean);
        cell.final_apr.push_back(r.evals.back().eval.apr.apr);
    }
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    for (const auto& key : order) {
        auto& cell = cells[key];
        cell.auc_mean = mean(cell.auc);
        cell.final_return_mean = mean(cell.final_return);
        cell.final_apr_mean = mean(cell.final_apr);
    }
    // Best-normalized AUC per environment across modes.
    std::map<std::string, std::vector<std::pair<std::string, Mode>>> by_env;
    for (const auto& key : order) by_env[key.first].push_back(key);
    for (const auto& [env, keys] : by_env) {
        std::vector<double> values;
        for (const auto& k : keys) values.push_back(cells[k].auc_mean);
        if (*std::max_element(values.begin(), values.end()) == 0.0) {
            for (const auto& k : keys) cells[k].auc_best_normalized = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const auto norm = best_normalized(values);
        for (std::size_t i = 0; i < keys.size(); ++i) cells[keys[i]].auc_best_normalized = norm[i];
    }
    for (const auto& key : order) m.cells.push_back(cells[key]);
    return m;
}

std::string format_matrix_table(const MatrixResult& m) {
    std::string out = fmt::format("{:<28} {:<8} {:>5} {:>14} {:>10} {:>14} {:>8}\n", "env", "mode", "seeds",
                                  "auc_mean", "auc_best", "final_return", "apr");
    for (const auto& c : m.cells)
        out += fmt::format("{:<28} {:<8} {:>5} {:>14.4g} {:>10.4f} {:>14.4f} {:>8.2f}\n", c.env, to_string(c.mode),
                           c.auc.size(), c.auc_mean, c.auc_best_normalized, c.final_return_mean, c.final_apr_mean);
    return out;
}

void write_matrix_csv(const MatrixResult& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "env,mode,seeds,auc_mean,auc_best_normalized,final_return_mean,final_apr_mean\n";
    for (const auto& c : m.cells)
        out << c.env << ',' << to_string(c.mode) << ',' << c.auc.size() << ',' << csv_number(c.auc_mean) << ','
            << csv_number(c.auc_best_normalized) << ',' << csv_number(c.final_return_mean) << ','
            << csv_number(c.final_apr_mean) << '\n';
    if (!out) throw IoError("write failed for '" + path + "'");
}

void export_curve_csv(const RunRecord& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << "step,return_mean,return_stderr,apr,afr,alpha_beta,alpha_pi,critic_loss,train_return_mean";
    for (std::size_t i = 0; i < r.env.act_dim; ++i) out << ",apr_dim" << i;
    out << '\n';
    for (const auto& e : r.evals) {
        out << e.step << ',' << csv_number(e.eval.return_mean) << ',' << csv_number(e.eval.return_stderr) << ','
            << csv_number(e.eval.apr.apr) << ',' << csv_number(e.eval.afr) << ',' << csv_number(e.alpha_beta) << ','
            << csv_number(e.alpha_pi) << ',' << csv_number(e.critic_loss) << ','
            << csv_number(e.train_return_mean);
        for (std::size_t i = 0; i < r.env.act_dim; ++i)
            out << ',' << (i < e.eval.apr.apr_per_dim.size() ? csv_number(e.eval.apr.apr_per_dim[i]) : "");
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<std::string> export_selection_csv(const std::vector<EpisodeTrace>& traces, const std::string& prefix) {
    std::vector<std::string> paths;
    for (std::size_t k = 0; k < traces.size(); ++k) {
        paths.push_back(prefix + "_ep" + std::to_string(k) + ".csv");
        export_selection_trace(traces[k], paths.back());
    }
    return paths;
}

}  // namespace sdar
