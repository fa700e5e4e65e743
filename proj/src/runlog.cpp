#include "sdar/runlog.hpp"

#include <sstream>

#include "sdar/errors.hpp"

namespace sdar {

using nlohmann::json;

namespace {

json spec_json(const EnvSpec& s) {
    return {{"name", s.name}, {"obs_dim", s.obs_dim}, {"act_dim", s.act_dim}, {"max_episode_steps", s.max_episode_steps}};
}

EnvSpec spec_from_json(const json& j) {
    EnvSpec s;
    s.name = j.at("name").get<std::string>();
    s.obs_dim = j.at("obs_dim").get<std::size_t>();
    s.act_dim = j.at("act_dim").get<std::size_t>();
    s.max_episode_steps = j.at("max_episode_steps").get<int>();
    return s;
}

json object_of(std::initializer_list<std::pair<const char*, json>> items) {
    json j = json::object();
    for (const auto& [k, v] : items) j[k] = v;
    return j;
}

}  // namespace

std::string make_run_id(const RunConfig& cfg) {
    std::string env = cfg.env;
    const auto colon = env.find(':');
    if (colon != std::string::npos) env = env.substr(colon + 1);
    std::string clean;
    for (char ch : env) clean += std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' ? ch : '_';
    if (clean.size() > 24) clean.resize(24);
    return clean + "-" + to_string(cfg.train.mode) + "-s" + std::to_string(cfg.train.seed) + "-" +
           cfg.hash().substr(0, 8);
}

json header_json(const RunConfig& cfg, const EnvSpec& spec) {
    return object_of({{"type", "header"},
                         {"format", kLogFormat},
                         {"run_id", make_run_id(cfg)},
                         {"config_hash", cfg.hash()},
                         {"seed", cfg.train.seed},
                         {"config", cfg.to_json()},
                         {"env", spec_json(spec)}});
}

json eval_json(const EvalRecord& r) {
    return object_of({{"type", "eval"},
                         {"step", r.step},
                         {"return_mean", r.eval.return_mean},
                         {"return_stderr", r.eval.return_stderr},
                         {"episodes", r.eval.episodes},
                         {"apr", r.eval.apr.apr},
                         {"p_repeat", r.eval.apr.p},
                         {"apr_per_dim", r.eval.apr.apr_per_dim},
                         {"p_repeat_per_dim", r.eval.apr.p_per_dim},
                         {"afr", r.eval.afr},
                         {"alpha_beta", r.alpha_beta},
                         {"alpha_pi", r.alpha_pi},
                         {"critic_loss", r.critic_loss},
                         {"actor_objective", r.actor_objective},
                         {"selection_objective", r.selection_objective},
                         {"train_episodes", r.train_episodes},
                         {"train_return_mean", r.train_return_mean}});
}

EvalRecord eval_from_json(const json& j) {
    EvalRecord r;
    r.step = j.at("step").get<std::int64_t>();
    r.eval.return_mean = j.at("return_mean").get<double>();
    r.eval.return_stderr = j.at("return_stderr").get<double>();
    r.eval.episodes = j.at("episodes").get<int>();
    r.eval.apr.apr = j.at("apr").get<double>();
    r.eval.apr.p = j.at("p_repeat").get<double>();
    r.eval.apr.apr_per_dim = j.at("apr_per_dim").get<std::vector<double>>();
    r.eval.apr.p_per_dim = j.at("p_repeat_per_dim").get<std::vector<double>>();
    r.eval.afr = j.at("afr").get<double>();
    r.alpha_beta = j.at("alpha_beta").get<double>();
    r.alpha_pi = j.at("alpha_pi").get<double>();
    r.critic_loss = j.at("critic_loss").get<double>();
    r.actor_objective = j.at("actor_objective").get<double>();
    r.selection_objective = j.at("selection_objective").get<double>();
    r.train_episodes = j.at("train_episodes").get<std::int64_t>();
    r.train_return_mean = j.at("train_return_mean").get<double>();
    return r;
}

RunLogWriter::RunLogWriter(const std::string& path, const RunConfig& cfg, const EnvSpec& spec)
    : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot write run log '" + path + "'");
    line(header_json(cfg, spec));
}

RunLogWriter RunLogWriter::resume(const std::string& path, std::int64_t step) {
    std::vector<std::string> keep;
    {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot read run log '" + path + "' to resume");
        std::string l;
        while (std::getline(in, l)) {
            if (l.empty()) continue;
            const json j = json::parse(l);
            const std::string type = j.at("type").get<std::string>();
            if (type == "header" || (type == "eval" && j.at("step").get<std::int64_t>() <= step)) keep.push_back(l);
        }
    }
    if (keep.empty()) throw IoError("run log '" + path + "' has no header");
    RunLogWriter w;
    w.out_.open(path, std::ios::binary | std::ios::trunc);
    if (!w.out_) throw IoError("cannot write run log '" + path + "'");
    for (const auto& l : keep) w.out_ << l << '\n';
    w.out_.flush();
    return w;
}

void RunLogWriter::line(const json& j) {
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("run log write failed");
}

void RunLogWriter::write(const EvalRecord& r) { line(eval_json(r)); }

void RunLogWriter::finish(std::int64_t step) { line(object_of({{"type", "end"}, {"step", step}})); }

RunRecord read_run_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read run log '" + path + "'");
    RunRecord r;
    std::string l;
    int n = 0;
    bool header = false;
    while (std::getline(in, l)) {
        ++n;
        if (l.empty()) continue;
        try {
            const json j = json::parse(l);
            const std::string type = j.at("type").get<std::string>();
            if (type == "header") {
                if (header) throw ConfigError("second header");
                header = true;
                if (j.at("format").get<int>() != kLogFormat) throw ConfigError("unsupported log format");
                r.run_id = j.at("run_id").get<std::string>();
                r.config_hash = j.at("config_hash").get<std::string>();
                r.seed = j.at("seed").get<std::uint64_t>();
                r.config = j.at("config");
                r.env = spec_from_json(j.at("env"));
            } else if (type == "eval") {
                if (!header) throw ConfigError("record before header");
                r.evals.push_back(eval_from_json(j));
            } else if (type == "end") {
                r.end_step = j.at("step").get<std::int64_t>();
            } else {
                throw ConfigError("unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw ConfigError(path + ":" + std::to_string(n) + ": " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    if (!header) throw ConfigError(path + ": missing header line");
    return r;
}

std::string render_run_log(const RunRecord& r) {
    std::ostringstream out;
    json h = object_of({{"type", "header"},
                           {"format", kLogFormat},
                           {"run_id", r.run_id},
                           {"config_hash", r.config_hash},
                           {"seed", r.seed},
                           {"config", r.config},
                           {"env", spec_json(r.env)}});
    out << h.dump() << '\n';
    for (const auto& e : r.evals) out << eval_json(e).dump() << '\n';
    if (r.end_step) out << object_of({{"type", "end"}, {"step", *r.end_step}}).dump() << '\n';
    return out.str();
}

std::vector<std::pair<double, double>> return_curve(const RunRecord& r) {
    std::vector<std::pair<double, double>> c;
    for (const auto& e : r.evals) c.emplace_back(static_cast<double>(e.step), e.eval.return_mean);
    return c;
}

}  // namespace sdar
