#include "sdar/config.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "sdar/errors.hpp"

namespace sdar {

namespace {

using nlohmann::json;

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    s = s.substr(b, e - b + 1);
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
    return s;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("config " + key + ": '" + value + "' is not " + expected);
}

double parse_double(const std::string& key, const std::string& v) {
    const std::string s = trim(v);
    double out = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) bad_value(key, v, "a number");
    return out;
}

template <typename I>
I parse_int(const std::string& key, const std::string& v) {
    const std::string s = trim(v);
    I out{};
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) bad_value(key, v, "an integer");
    return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
    const std::string s = trim(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    bad_value(key, v, "a boolean");
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
    std::string s = trim(v);
    if (!s.empty() && s.front() == '[') s = s.substr(1);
    if (!s.empty() && s.back() == ']') s.pop_back();
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::stringstream words(item);
        std::string w;
        while (words >> w) out.push_back(parse_int<std::size_t>(key, w));
    }
    if (out.empty()) bad_value(key, v, "a list of layer widths");
    return out;
}

struct Field {
    std::string section;
    std::string key;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, const json&)> set_json;
    std::function<void(RunConfig&, const std::string&)> set_text;
};

template <typename M>
Field number_field(std::string section, std::string key, M TrainConfig::*member) {
    const std::string full = section + "." + key;
    Field f{section, key, nullptr, nullptr, nullptr};
    f.get = [member](const RunConfig& c) { return json(c.train.*member); };
    f.set_json = [member, full](RunConfig& c, const json& j) {
        if (!j.is_number() && !j.is_boolean()) throw ConfigError("config " + full + ": expected a number");
        c.train.*member = j.get<M>();
    };
    f.set_text = [member, full](RunConfig& c, const std::string& v) {
        if constexpr (std::is_same_v<M, bool>) {
            c.train.*member = parse_bool(full, v);
        } else if constexpr (std::is_floating_point_v<M>) {
            c.train.*member = parse_double(full, v);
        } else {
            c.train.*member = parse_int<M>(full, v);
        }
    };
    return f;
}

template <typename E>
Field enum_field(std::string section, std::string key, E TrainConfig::*member, E (*parse)(const std::string&)) {
    Field f{section, key, nullptr, nullptr, nullptr};
    f.get = [member](const RunConfig& c) { return json(to_string(c.train.*member)); };
    f.set_json = [member, parse](RunConfig& c, const json& j) { c.train.*member = parse(j.get<std::string>()); };
    f.set_text = [member, parse](RunConfig& c, const std::string& v) { c.train.*member = parse(trim(v)); };
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> t;
        {
            Field f{"run", "env", nullptr, nullptr, nullptr};
            f.get = [](const RunConfig& c) { return json(c.env); };
            f.set_json = [](RunConfig& c, const json& j) { c.env = j.get<std::string>(); };
            f.set_text = [](RunConfig& c, const std::string& v) { c.env = trim(v); };
            t.push_back(f);
        }
        t.push_back(number_field("run", "seed", &TrainConfig::seed));
        t.push_back(number_field("run", "total_steps", &TrainConfig::total_steps));
        t.push_back(number_field("run", "warmup_steps", &TrainConfig::warmup_steps));
        t.push_back(number_field("run", "eval_every", &TrainConfig::eval_every));
        t.push_back(number_field("run", "eval_episodes", &TrainConfig::eval_episodes));
        t.push_back(number_field("run", "stochastic_eval", &TrainConfig::stochastic_eval));
        t.push_back(number_field("run", "replay_capacity", &TrainConfig::replay_capacity));
        t.push_back(enum_field("run", "precision", &TrainConfig::precision, &parse_precision));

        t.push_back(enum_field("agent", "mode", &TrainConfig::mode, &parse_mode));
        t.push_back(number_field("agent", "nrep", &TrainConfig::nrep));
        t.push_back(enum_field("agent", "beta_update", &TrainConfig::beta_update, &parse_beta_update));
        t.push_back(number_field("agent", "sample_count", &TrainConfig::sample_count));
        t.push_back(number_field("agent", "enum_cap", &TrainConfig::enum_cap));
        t.push_back(number_field("agent", "auto_exact_max_dim", &TrainConfig::auto_exact_max_dim));
        t.push_back(number_field("agent", "lambda", &TrainConfig::lambda));
        t.push_back(number_field("agent", "xi", &TrainConfig::xi));
        {
            Field f{"agent", "hidden", nullptr, nullptr, nullptr};
            f.get = [](const RunConfig& c) { return json(c.train.hidden); };
            f.set_json = [](RunConfig& c, const json& j) { c.train.hidden = j.get<std::vector<std::size_t>>(); };
            f.set_text = [](RunConfig& c, const std::string& v) { c.train.hidden = parse_sizes("agent.hidden", v); };
            t.push_back(f);
        }
        t.push_back(number_field("agent", "soft_target_entropy", &TrainConfig::soft_target_entropy));
        t.push_back(number_field("agent", "mask_pi_entropy", &TrainConfig::mask_pi_entropy));
        t.push_back(number_field("agent", "init_log_alpha_beta", &TrainConfig::init_log_alpha_beta));
        t.push_back(number_field("agent", "init_log_alpha_pi", &TrainConfig::init_log_alpha_pi));

        t.push_back(number_field("optimizer", "batch_size", &TrainConfig::batch_size));
        t.push_back(number_field("optimizer", "gamma", &TrainConfig::gamma));
        t.push_back(number_field("optimizer", "lr_pi", &TrainConfig::lr_pi));
        t.push_back(number_field("optimizer", "lr_beta", &TrainConfig::lr_beta));
        t.push_back(number_field("optimizer", "lr_q", &TrainConfig::lr_q));
        t.push_back(number_field("optimizer", "lr_alpha", &TrainConfig::lr_alpha));
        t.push_back(number_field("optimizer", "policy_delay", &TrainConfig::policy_delay));
        t.push_back(number_field("optimizer", "tau", &TrainConfig::tau));
        return t;
    }();
    return table;
}

const Field& find_field(const std::string& section, const std::string& key) {
    for (const auto& f : fields())
        if (f.section == section && f.key == key) return f;
    throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
}

}  // namespace

json RunConfig::to_json() const {
    json j = json::object();
    for (const auto& f : fields()) j[f.section][f.key] = f.get(*this);
    return j;
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config json must be an object");
    RunConfig c;
    for (const auto& [section, body] : j.items()) {
        if (!body.is_object()) throw ConfigError("config section '" + section + "' must be an object");
        for (const auto& [key, value] : body.items()) {
            try {
                find_field(section, key).set_json(c, value);
            } catch (const json::exception& e) {
                throw ConfigError("config " + section + "." + key + ": " + e.what());
            }
        }
    }
    c.train.validate();
    return c;
}

std::string RunConfig::hash() const { return sha256_hex(to_json().dump()); }

std::string RunConfig::to_file_text() const {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out += "\n";
            section = f.section;
            out += "[" + section + "]\n";
        }
        const json v = f.get(*this);
        std::string text;
        if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i) text += (i ? ", " : "") + v[i].dump();
            text = "[" + text + "]";
        } else {
            text = v.dump();
        }
        out += f.key + " = " + text + "\n";
    }
    return out;
}

void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
    find_field(section, key).set_text(cfg, value);
}

RunConfig parse_config_text(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_config(in);
    } catch (const CLI::Error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") continue;  // section markers
        const std::string section = item.parents.empty() ? "" : item.parents.back();
        if (item.parents.size() > 1) throw ConfigError("config: nested section for key '" + item.name + "'");
        std::string value;
        for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
        apply_setting(base, section, item.name, value);
    }
    base.train.validate();
    return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.section + "." + f.key);
    return out;
}

RunConfig preset(const std::string& name) {
    RunConfig c;
    if (name == "default") return c;
    if (name == "paper-desk") {
        c.env = "builtin:mountain_car";
        c.train.mode = Mode::sdar;
        c.train.total_steps = 100000;
        c.train.eval_every = 5000;
        c.train.eval_episodes = 5;
        c.train.precision = Precision::f32;
        return c;
    }
    if (name == "paper-desk-point-mass") {
        c.env = "builtin:point_mass";
        c.train.mode = Mode::sdar;
        c.train.total_steps = 60000;
        c.train.eval_every = 5000;
        c.train.eval_episodes = 5;
        c.train.precision = Precision::f32;
        return c;
    }
    throw ConfigError("unknown preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"default", "paper-desk", "paper-desk-point-mass"}; }

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

}  // namespace sdar
