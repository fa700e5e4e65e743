// Test double speaking the bridge wire protocol.
//
// obs_dim 3, act_dim 2, episodes of 50 steps.
// reset(seed): obs = three uniforms in [-1, 1) drawn from the seed.
// step(a):     obs = (a0, a1, 0), reward = a0 + a1.
//
// --fault=<kind> makes it misbehave on purpose:
//   garbage      handshake reply is not JSON
//   version      handshake reports protocol version 2
//   hang         never answers step
//   crash        writes a diagnostic to stderr and exits on step
//   chatty       writes an extra line after each step reply
//   short-obs    step replies carry two observation entries

#include <chrono>
#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <thread>

#include "sdar/rng.hpp"

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void reply(const std::string& s) {
    std::fwrite(s.data(), 1, s.size(), stdout);
    std::fputc('\n', stdout);
    std::fflush(stdout);
}

std::string error_reply(const nlohmann::json& id, const std::string& msg) {
    return "{\"id\":" + id.dump() + ",\"error\":" + nlohmann::json(msg).dump() + "}";
}

}  // namespace

int main(int argc, char** argv) {
    std::string fault;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a.rfind("--fault=", 0) == 0) fault = a.substr(8);
    }
    constexpr int kLimit = 50;
    int steps = 0;
    bool live = false;
    std::string line;
    while (std::getline(std::cin, line)) {
        nlohmann::json req;
        try {
            req = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            reply(error_reply(nullptr, "malformed request"));
            continue;
        }
        const nlohmann::json id = req.value("id", nlohmann::json(nullptr));
        const std::string cmd = req.value("cmd", std::string());
        if (cmd == "spec") {
            if (fault == "garbage") {
                reply("hello there");
                continue;
            }
            const int v = fault == "version" ? 2 : 1;
            reply("{\"id\":" + id.dump() + ",\"v\":" + std::to_string(v) +
                  ",\"name\":\"echo\",\"obs_dim\":3,\"act_dim\":2,\"max_episode_steps\":" + std::to_string(kLimit) +
                  "}");
        } else if (cmd == "reset") {
            if (!req.contains("seed") || !req["seed"].is_number_unsigned()) {
                reply(error_reply(id, "reset needs an unsigned integer seed"));
                continue;
            }
            sdar::Rng rng(req["seed"].get<std::uint64_t>());
            std::string obs;
            for (int i = 0; i < 3; ++i) obs += (i ? "," : "") + num(rng.uniform(-1.0, 1.0));
            steps = 0;
            live = true;
            reply("{\"id\":" + id.dump() + ",\"obs\":[" + obs + "]}");
        } else if (cmd == "step") {
            if (fault == "hang") {
                std::this_thread::sleep_for(std::chrono::hours(1));
            }
            if (fault == "crash") {
                std::fprintf(stderr, "echo_env: simulated crash at step %d\n", steps);
                return 3;
            }
            if (!live) {
                reply(error_reply(id, "step before reset"));
                continue;
            }
            const auto& a = req.value("action", nlohmann::json::array());
            if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
                reply(error_reply(id, "action must be two numbers"));
                continue;
            }
            const double a0 = a[0].get<double>();
            const double a1 = a[1].get<double>();
            ++steps;
            const bool truncated = steps >= kLimit;
            if (truncated) live = false;
            const std::string obs = fault == "short-obs" ? num(a0) + "," + num(a1) : num(a0) + "," + num(a1) + ",0";
            reply("{\"id\":" + id.dump() + ",\"obs\":[" + obs + "],\"reward\":" + num(a0 + a1) +
                  ",\"terminated\":false,\"truncated\":" + (truncated ? "true" : "false") + "}");
            if (fault == "chatty") reply("{\"note\":\"unsolicited\"}");
        } else if (cmd == "close") {
            reply("{\"id\":" + id.dump() + "}");
            return 0;
        } else {
            reply(error_reply(id, "unknown command '" + cmd + "'"));
        }
    }
    return 0;
}
