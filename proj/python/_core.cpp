// Python bindings. Configs and results cross the boundary as JSON text; the
// package wrapper in sdar/__init__.py turns them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <spdlog/spdlog.h>

#include <nlohmann/json.hpp>

#include "sdar/check.hpp"
#include "sdar/config.hpp"
#include "sdar/env_bridge.hpp"
#include "sdar/errors.hpp"
#include "sdar/harness.hpp"
#include "sdar/metrics.hpp"
#include "sdar/runlog.hpp"
#include "sdar/trainer.hpp"

namespace py = pybind11;
using namespace sdar;
using json = nlohmann::json;

namespace {

RunConfig config_from(const std::string& text) { return RunConfig::from_json(json::parse(text)); }

json summary_json(const EvalSummary& s) {
    return {{"return_mean", s.return_mean}, {"return_stderr", s.return_stderr}, {"apr", s.apr.apr},
            {"apr_per_dim", s.apr.apr_per_dim}, {"p", s.apr.p}, {"afr", s.afr}, {"episodes", s.episodes}};
}

EpisodeTrace make_trace(std::vector<std::vector<double>> actions, std::vector<double> initial_action,
                        std::vector<double> rewards) {
    EpisodeTrace t;
    if (initial_action.empty() && !actions.empty()) initial_action.assign(actions.front().size(), 0.0);
    t.initial_action = std::move(initial_action);
    t.actions = std::move(actions);
    t.rewards = rewards.empty() ? std::vector<double>(t.actions.size(), 0.0) : std::move(rewards);
    t.validate();
    return t;
}

// Double-precision trainer over a built-in or bridged environment.
class PyTrainer {
public:
    explicit PyTrainer(const std::string& config_json)
        : cfg_(config_from(config_json)), tr_(cfg_.train, env_factory_from_uri(cfg_.env)) {}

    std::string train(std::int64_t until) {
        json records = json::array();
        {
            py::gil_scoped_release release;
            tr_.train([&](const EvalRecord& r) { records.push_back(eval_json(r)); }, until);
        }
        return records.dump();
    }

    std::string evaluate() { return eval_json(tr_.evaluate_now()).dump(); }

    py::tuple act(const std::vector<double>& obs, const std::vector<double>& a_prev, bool deterministic,
                  bool episode_start) {
        const auto& spec = tr_.env_spec();
        if (obs.size() != spec.obs_dim || a_prev.size() != spec.act_dim)
            throw ConfigError("act: expected obs of size " + std::to_string(spec.obs_dim) + " and a_prev of size " +
                              std::to_string(spec.act_dim));
        ActOptions o;
        o.deterministic = deterministic;
        o.force_all_act = episode_start || !tr_.config().uses_selection();
        const Vector<double> s = Eigen::Map<const Vector<double>>(obs.data(), obs.size());
        const Vector<double> p = Eigen::Map<const Vector<double>>(a_prev.data(), a_prev.size());
        const auto out = sdar::act(tr_.agent().policy, s, p, o, tr_.policy_rng());
        std::vector<double> a(out.action.data(), out.action.data() + out.action.size());
        std::vector<int> b(out.schema.data(), out.schema.data() + out.schema.size());
        return py::make_tuple(a, b);
    }

    std::int64_t step() const { return tr_.step(); }
    std::string config() const { return cfg_.to_json().dump(); }
    py::dict env_spec() const {
        const auto& s = tr_.env_spec();
        py::dict d;
        d["name"] = s.name;
        d["obs_dim"] = s.obs_dim;
        d["act_dim"] = s.act_dim;
        d["max_episode_steps"] = s.max_episode_steps;
        return d;
    }
    py::dict temperatures() const {
        py::dict d;
        d["alpha_beta"] = tr_.agent().temps.alpha_beta();
        d["alpha_pi"] = tr_.agent().temps.alpha_pi();
        return d;
    }

private:
    RunConfig cfg_;
    Trainer<double> tr_;
};

class PyEnv {
public:
    explicit PyEnv(const std::string& name) : env_(make_builtin_env(name)) {}
    std::vector<double> reset(std::uint64_t seed) { return env_->reset(seed); }
    py::tuple step(const std::vector<double>& action) {
        const auto r = env_->step(action);
        return py::make_tuple(r.obs, r.reward, r.terminated, r.truncated);
    }
    std::size_t obs_dim() const { return env_->spec().obs_dim; }
    std::size_t act_dim() const { return env_->spec().act_dim; }
    int max_episode_steps() const { return env_->spec().max_episode_steps; }
    std::string name() const { return env_->spec().name; }

private:
    std::unique_ptr<Env> env_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Act-or-repeat reinforcement learning agent (native core)";
    spdlog::set_level(spdlog::level::warn);

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def("set_log_level", [](const std::string& lvl) { spdlog::set_level(spdlog::level::from_str(lvl)); });

    m.def("preset", [](const std::string& name) { return preset(name).to_json().dump(); });
    m.def("preset_names", &preset_names);
    m.def("config_keys", &config_keys);
    m.def("parse_config", [](const std::string& text, const std::string& base) {
        return parse_config_text(text, base.empty() ? RunConfig{} : config_from(base)).to_json().dump();
    });
    m.def("apply_setting", [](const std::string& cfg, const std::string& section, const std::string& key,
                              const std::string& value) {
        RunConfig c = config_from(cfg);
        apply_setting(c, section, key, value);
        return c.to_json().dump();
    });
    m.def("validate_config", [](const std::string& cfg) { config_from(cfg).train.validate(); });
    m.def("config_hash", [](const std::string& cfg) { return config_from(cfg).hash(); });
    m.def("config_text", [](const std::string& cfg) { return config_from(cfg).to_file_text(); });

    m.def(
        "train",
        [](const std::string& cfg, const std::string& out_dir, std::int64_t stop_at, const std::string& resume,
           std::optional<double> stop_at_return) {
            TrainRunOptions o;
            o.out_dir = out_dir;
            o.stop_at = stop_at;
            o.resume_from = resume;
            if (stop_at_return)
                o.stop_when = [x = *stop_at_return](const EvalRecord& r) { return r.eval.return_mean >= x; };
            const RunConfig c = config_from(cfg);
            TrainRunResult r;
            {
                py::gil_scoped_release release;
                r = run_training(c, o);
            }
            json evals = json::array();
            for (const auto& e : r.record.evals) evals.push_back(eval_json(e));
            return json{{"run_id", r.record.run_id}, {"steps", r.steps},         {"finished", r.finished},
                        {"log", r.log_path},         {"evals", evals},           {"checkpoint", r.checkpoint_path},
                        {"wall_clock_seconds", r.wall_clock_seconds}}
                .dump();
        },
        py::arg("config"), py::arg("out_dir") = "", py::arg("stop_at") = -1, py::arg("resume") = "",
        py::arg("stop_at_return") = py::none());

    m.def(
        "evaluate",
        [](const std::string& checkpoint, int episodes, std::uint64_t seed, bool deterministic,
           const std::string& traces_out) {
            EvalRunOptions o;
            o.episodes = episodes;
            o.seed = seed;
            o.deterministic = deterministic;
            o.traces_out = traces_out;
            EvalRunResult r;
            {
                py::gil_scoped_release release;
                r = run_evaluation(checkpoint, o);
            }
            json j = summary_json(r.summary);
            j["checkpoint_step"] = r.checkpoint_step;
            return j.dump();
        },
        py::arg("checkpoint"), py::arg("episodes") = 10, py::arg("seed") = 0, py::arg("deterministic") = true,
        py::arg("traces_out") = "");

    m.def("read_run_log", [](const std::string& path) {
        const auto r = read_run_log(path);
        json evals = json::array();
        for (const auto& e : r.evals) evals.push_back(eval_json(e));
        return json{{"run_id", r.run_id}, {"config_hash", r.config_hash}, {"seed", r.seed},
                    {"config", r.config}, {"evals", evals},               {"end_step", r.end_step ? json(*r.end_step) : json(nullptr)}}
            .dump();
    });

    py::class_<EpisodeTrace>(m, "EpisodeTrace")
        .def(py::init(&make_trace), py::arg("actions"), py::arg("initial_action") = std::vector<double>{},
             py::arg("rewards") = std::vector<double>{})
        .def_readonly("initial_action", &EpisodeTrace::initial_action)
        .def_readonly("actions", &EpisodeTrace::actions)
        .def_readonly("rewards", &EpisodeTrace::rewards)
        .def("episode_return", &EpisodeTrace::episode_return)
        .def("__len__", &EpisodeTrace::length);

    m.def(
        "apr",
        [](const std::vector<EpisodeTrace>& traces, double tolerance) {
            const auto r = apr(traces, AprOptions{tolerance});
            py::dict d;
            d["p"] = r.p;
            d["apr"] = r.apr;
            d["p_per_dim"] = r.p_per_dim;
            d["apr_per_dim"] = r.apr_per_dim;
            return d;
        },
        py::arg("traces"), py::arg("tolerance") = 0.0);
    m.def(
        "afr",
        [](const std::vector<EpisodeTrace>& traces, const std::string& norm) {
            if (norm != "euclidean" && norm != "mean_abs") throw ConfigError("afr norm must be euclidean or mean_abs");
            return afr(traces, norm == "euclidean" ? AfrNorm::euclidean : AfrNorm::mean_abs);
        },
        py::arg("traces"), py::arg("norm") = "euclidean");
    m.def(
        "n_score", [](double z, double z0, double z1) { return n_score(z, NormalizationRef{z0, z1}); }, py::arg("z"),
        py::arg("z0"), py::arg("z1"));
    m.def("auc", [](const std::vector<std::pair<double, double>>& curve) { return auc(curve); });
    m.def("best_normalized", [](const std::vector<double>& v) { return best_normalized(v); });

    py::class_<PyEnv>(m, "Env")
        .def(py::init<const std::string&>())
        .def("reset", &PyEnv::reset, py::arg("seed") = 0)
        .def("step", &PyEnv::step)
        .def_property_readonly("name", &PyEnv::name)
        .def_property_readonly("obs_dim", &PyEnv::obs_dim)
        .def_property_readonly("act_dim", &PyEnv::act_dim)
        .def_property_readonly("max_episode_steps", &PyEnv::max_episode_steps);
    m.def("builtin_env_names", &builtin_env_names);

    py::class_<PyTrainer>(m, "Trainer")
        .def(py::init<const std::string&>())
        .def("train", &PyTrainer::train, py::arg("until") = -1)
        .def("evaluate", &PyTrainer::evaluate)
        .def("act", &PyTrainer::act, py::arg("obs"), py::arg("a_prev"), py::arg("deterministic") = false,
             py::arg("episode_start") = false)
        .def_property_readonly("step", &PyTrainer::step)
        .def_property_readonly("env_spec", &PyTrainer::env_spec)
        .def_property_readonly("temperatures", &PyTrainer::temperatures)
        .def("config", &PyTrainer::config);

    m.def("check_names", &check_names);
    m.def(
        "run_check",
        [](const std::string& name, const std::string& scratch) {
            CheckResult r;
            {
                py::gil_scoped_release release;
                r = run_check(name, scratch);
            }
            return py::make_tuple(r.passed, r.detail, r.seconds);
        },
        py::arg("name"), py::arg("scratch"));
}
