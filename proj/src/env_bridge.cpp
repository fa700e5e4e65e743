#include "sdar/env_bridge.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <nlohmann/json.hpp>
#include <thread>

#include "sdar/errors.hpp"

namespace sdar {

namespace {

constexpr std::size_t kStderrKeep = 8192;

using Clock = std::chrono::steady_clock;

void append_number(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

std::vector<double> number_array(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_array()) throw ProtocolError(std::string("missing array '") + key + "'");
    std::vector<double> out;
    out.reserve(it->size());
    for (const auto& v : *it) {
        if (!v.is_number()) throw ProtocolError(std::string("non-numeric entry in '") + key + "'");
        out.push_back(v.get<double>());
    }
    return out;
}

std::size_t positive_field(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer() || it->get<std::int64_t>() < 1)
        throw ProtocolError(std::string("spec reply needs a positive integer '") + key + "'");
    return it->get<std::size_t>();
}

bool flag_field(const nlohmann::json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) return false;
    if (!it->is_boolean()) throw ProtocolError(std::string("'") + key + "' must be a boolean");
    return it->get<bool>();
}

}  // namespace

std::string encode_request(std::int64_t id, const std::string& cmd, const std::uint64_t* seed,
                           const std::vector<double>* action) {
    std::string s = "{\"id\":" + std::to_string(id) + ",\"cmd\":\"" + cmd + "\"";
    if (seed) s += ",\"seed\":" + std::to_string(*seed);
    if (action) {
        s += ",\"action\":[";
        for (std::size_t i = 0; i < action->size(); ++i) {
            if (i) s += ',';
            append_number(s, (*action)[i]);
        }
        s += ']';
    }
    s += '}';
    return s;
}

std::unique_ptr<BridgeEnv> BridgeEnv::spawn(const std::string& command, BridgeOptions opts) {
    if (command.empty()) throw ConfigError("bridge: empty command");
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0)
        throw IoError(std::string("bridge: socketpair failed: ") + std::strerror(errno));
    int ep[2];
    if (::pipe2(ep, O_CLOEXEC) != 0) {
        ::close(sv[0]);
        ::close(sv[1]);
        throw IoError(std::string("bridge: pipe failed: ") + std::strerror(errno));
    }
    const pid_t pid = ::fork();
    if (pid < 0) {
        for (int fd : {sv[0], sv[1], ep[0], ep[1]}) ::close(fd);
        throw IoError(std::string("bridge: fork failed: ") + std::strerror(errno));
    }
    if (pid == 0) {
        ::dup2(sv[1], STDIN_FILENO);
        ::dup2(sv[1], STDOUT_FILENO);
        ::dup2(ep[1], STDERR_FILENO);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        const char msg[] = "bridge: exec /bin/sh failed\n";
        [[maybe_unused]] auto n = ::write(STDERR_FILENO, msg, sizeof msg - 1);
        ::_exit(127);
    }
    ::close(sv[1]);
    ::close(ep[1]);
    std::unique_ptr<BridgeEnv> env(new BridgeEnv());
    env->pid_ = pid;
    env->channel_ = sv[0];
    env->err_fd_ = ep[0];
    env->opts_ = opts;
    ::fcntl(env->channel_, F_SETFL, ::fcntl(env->channel_, F_GETFL) | O_NONBLOCK);
    ::fcntl(env->err_fd_, F_SETFL, ::fcntl(env->err_fd_, F_GETFL) | O_NONBLOCK);

    const std::int64_t id = env->next_id_++;
    const std::string reply = env->request(encode_request(id, "spec", nullptr, nullptr), opts.handshake_timeout);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(reply);
    } catch (const nlohmann::json::exception&) {
        env->fail("malformed handshake reply: " + reply);
    }
    try {
        if (!j.is_object() || !j.contains("id") || j["id"] != id) throw ProtocolError("reply id does not match");
        if (j.contains("error")) throw ProtocolError("child refused spec: " + j["error"].dump());
        if (!j.contains("v") || !j["v"].is_number_integer())
            throw ProtocolError("spec reply has no protocol version");
        if (j["v"].get<int>() != kProtocolVersion)
            throw ProtocolError("protocol version " + j["v"].dump() + " (expected " +
                                std::to_string(kProtocolVersion) + ")");
        env->spec_.obs_dim = positive_field(j, "obs_dim");
        env->spec_.act_dim = positive_field(j, "act_dim");
        env->spec_.max_episode_steps = static_cast<int>(positive_field(j, "max_episode_steps"));
        env->spec_.name = j.contains("name") && j["name"].is_string() ? j["name"].get<std::string>() : command;
    } catch (const ProtocolError& e) {
        env->fail(std::string(e.what()) + " in handshake reply: " + reply);
    }
    return env;
}

BridgeEnv::~BridgeEnv() {
    try {
        shutdown();
    } catch (...) {
        kill_child();
    }
}

void BridgeEnv::drain_stderr() {
    if (err_fd_ < 0) return;
    char buf[4096];
    for (;;) {
        const ssize_t n = ::read(err_fd_, buf, sizeof buf);
        if (n > 0) {
            stderr_.append(buf, static_cast<std::size_t>(n));
            if (stderr_.size() > kStderrKeep) stderr_.erase(0, stderr_.size() - kStderrKeep);
            continue;
        }
        if (n == 0) {
            ::close(err_fd_);
            err_fd_ = -1;
        }
        return;
    }
}

void BridgeEnv::fail(const std::string& what) {
    // Give a dying child a moment to flush its diagnostics.
    if (err_fd_ >= 0) {
        pollfd p{err_fd_, POLLIN, 0};
        if (::poll(&p, 1, 100) > 0) drain_stderr();
    }
    drain_stderr();
    std::string msg = "bridge: " + what;
    if (!stderr_.empty()) msg += "\nchild stderr:\n" + stderr_;
    kill_child();
    throw ProtocolError(msg);
}

void BridgeEnv::check_quiet() {
    if (!inbox_.empty()) fail("unsolicited output from child: " + inbox_.substr(0, inbox_.find('\n')));
    char buf[4096];
    const ssize_t n = ::recv(channel_, buf, sizeof buf, MSG_DONTWAIT);
    if (n > 0) {
        inbox_.assign(buf, static_cast<std::size_t>(n));
        fail("unsolicited output from child: " + inbox_.substr(0, inbox_.find('\n')));
    }
    if (n == 0) fail("child closed the protocol channel");
}

std::string BridgeEnv::read_line(std::chrono::milliseconds timeout) {
    const auto deadline = Clock::now() + timeout;
    char buf[65536];
    for (;;) {
        const auto nl = inbox_.find('\n');
        if (nl != std::string::npos) {
            std::string line = inbox_.substr(0, nl);
            inbox_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
        if (left.count() <= 0) fail("timed out after " + std::to_string(timeout.count()) + " ms waiting for a reply");
        pollfd fds[2] = {{channel_, POLLIN, 0}, {err_fd_, POLLIN, 0}};
        const int nfds = err_fd_ >= 0 ? 2 : 1;
        const int rc = ::poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(std::min<std::int64_t>(left.count(), 1000)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            fail(std::string("poll failed: ") + std::strerror(errno));
        }
        if (nfds == 2 && (fds[1].revents & (POLLIN | POLLHUP))) drain_stderr();
        if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
            const ssize_t n = ::recv(channel_, buf, sizeof buf, 0);
            if (n > 0) {
                inbox_.append(buf, static_cast<std::size_t>(n));
            } else if (n == 0) {
                int status = 0;
                std::string how = "child closed the protocol channel";
                if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                    pid_ = -1;
                    if (WIFEXITED(status)) how = "child exited with status " + std::to_string(WEXITSTATUS(status));
                    if (WIFSIGNALED(status)) how = "child killed by signal " + std::to_string(WTERMSIG(status));
                }
                fail(how + (inbox_.empty() ? "" : " after partial line: " + inbox_));
            } else if (errno != EAGAIN && errno != EINTR) {
                fail(std::string("read failed: ") + std::strerror(errno));
            }
        }
    }
}

std::string BridgeEnv::request(const std::string& line, std::chrono::milliseconds timeout) {
    if (pid_ <= 0 || channel_ < 0) throw ProtocolError("bridge: child is not running");
    check_quiet();
    const std::string out = line + '\n';
    std::size_t sent = 0;
    while (sent < out.size()) {
        const ssize_t n = ::send(channel_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
        if (n > 0) {
            sent += static_cast<std::size_t>(n);
        } else if (n < 0 && (errno == EAGAIN || errno == EINTR)) {
            pollfd p{channel_, POLLOUT, 0};
            ::poll(&p, 1, 1000);
        } else {
            fail(std::string("write failed: ") + std::strerror(errno));
        }
    }
    if (opts_.record) transcript_.push_back({'>', line});
    std::string reply = read_line(timeout);
    if (opts_.record) transcript_.push_back({'<', reply});
    if (!inbox_.empty()) fail("unsolicited output from child: " + inbox_.substr(0, inbox_.find('\n')));
    return reply;
}

std::vector<double> BridgeEnv::reset(std::uint64_t seed) {
    const std::int64_t id = next_id_++;
    const std::string reply = request(encode_request(id, "reset", &seed, nullptr), opts_.step_timeout);
    try {
        const auto j = nlohmann::json::parse(reply);
        if (!j.is_object() || !j.contains("id") || j["id"] != id) throw ProtocolError("reply id does not match");
        if (j.contains("error")) throw ProtocolError("child error: " + j["error"].get<std::string>());
        auto obs = number_array(j, "obs");
        if (obs.size() != spec_.obs_dim)
            throw ProtocolError("observation has " + std::to_string(obs.size()) + " entries, spec says " +
                                std::to_string(spec_.obs_dim));
        episode_live_ = true;
        return obs;
    } catch (const nlohmann::json::exception&) {
        fail("malformed reply to reset: " + reply);
    } catch (const ProtocolError& e) {
        fail(std::string(e.what()) + " in reply to reset: " + reply);
    }
}

StepResult BridgeEnv::step(std::span<const double> action) {
    if (action.size() != spec_.act_dim)
        throw ConfigError("bridge step: action has " + std::to_string(action.size()) + " entries, spec says " +
                          std::to_string(spec_.act_dim));
    if (!episode_live_) throw ProtocolError("bridge step: episode finished or not started; call reset first");
    std::vector<double> a(action.begin(), action.end());
    for (auto& x : a) {
        if (!std::isfinite(x)) throw NumericalError("bridge step: non-finite action");
        if (x < -1.0 || x > 1.0) {
            x = std::clamp(x, -1.0, 1.0);
            ++clamps_;
        }
    }
    const std::int64_t id = next_id_++;
    const std::string reply = request(encode_request(id, "step", nullptr, &a), opts_.step_timeout);
    try {
        const auto j = nlohmann::json::parse(reply);
        if (!j.is_object() || !j.contains("id") || j["id"] != id) throw ProtocolError("reply id does not match");
        if (j.contains("error")) throw ProtocolError("child error: " + j["error"].get<std::string>());
        StepResult r;
        r.obs = number_array(j, "obs");
        if (r.obs.size() != spec_.obs_dim)
            throw ProtocolError("observation has " + std::to_string(r.obs.size()) + " entries, spec says " +
                                std::to_string(spec_.obs_dim));
        if (!j.contains("reward") || !j["reward"].is_number()) throw ProtocolError("missing numeric 'reward'");
        r.reward = j["reward"].get<double>();
        r.terminated = flag_field(j, "terminated");
        r.truncated = flag_field(j, "truncated");
        if (r.terminated) r.truncated = false;
        if (r.terminated || r.truncated) episode_live_ = false;
        return r;
    } catch (const nlohmann::json::exception&) {
        fail("malformed reply to step: " + reply);
    } catch (const ProtocolError& e) {
        fail(std::string(e.what()) + " in reply to step: " + reply);
    }
}

std::string BridgeEnv::exchange(const std::string& cmd, const std::string& extra) {
    const std::int64_t id = next_id_++;
    return request("{\"id\":" + std::to_string(id) + ",\"cmd\":\"" + cmd + "\"" + extra + "}", opts_.step_timeout);
}

void BridgeEnv::kill_child() {
    if (pid_ > 0) {
        ::kill(pid_, SIGKILL);
        int status = 0;
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
    if (channel_ >= 0) ::close(channel_);
    if (err_fd_ >= 0) ::close(err_fd_);
    channel_ = err_fd_ = -1;
}

void BridgeEnv::shutdown() {
    if (pid_ <= 0) {
        kill_child();
        return;
    }
    const std::int64_t id = next_id_++;
    const std::string line = encode_request(id, "close", nullptr, nullptr) + '\n';
    if (::send(channel_, line.data(), line.size(), MSG_NOSIGNAL) > 0) {
        if (opts_.record) transcript_.push_back({'>', line.substr(0, line.size() - 1)});
        // The reply to close is optional; wait for it or for exit, whichever comes first.
        pollfd p{channel_, POLLIN, 0};
        if (::poll(&p, 1, static_cast<int>(opts_.close_grace.count())) > 0) {
            char buf[4096];
            const ssize_t n = ::recv(channel_, buf, sizeof buf, MSG_DONTWAIT);
            if (n > 0 && opts_.record) {
                std::string reply(buf, static_cast<std::size_t>(n));
                while (!reply.empty() && (reply.back() == '\n' || reply.back() == '\r')) reply.pop_back();
                transcript_.push_back({'<', reply});
            }
        }
    }
    ::shutdown(channel_, SHUT_WR);
    const auto deadline = Clock::now() + opts_.close_grace;
    while (Clock::now() < deadline) {
        int status = 0;
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
            pid_ = -1;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (pid_ > 0) {
        ::kill(pid_, SIGTERM);
        const auto hard = Clock::now() + std::chrono::milliseconds(500);
        while (Clock::now() < hard) {
            int status = 0;
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                pid_ = -1;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }
    drain_stderr();
    kill_child();
}

EnvFactory env_factory_from_uri(const std::string& uri, BridgeOptions opts) {
    const auto colon = uri.find(':');
    const std::string scheme = colon == std::string::npos ? "builtin" : uri.substr(0, colon);
    const std::string rest = colon == std::string::npos ? uri : uri.substr(colon + 1);
    if (scheme == "builtin") {
        auto probe = make_builtin_env(rest);  // throws on unknown names
        (void)probe;
        return [rest] { return make_builtin_env(rest); };
    }
    if (scheme == "bridge") {
        if (rest.empty()) throw ConfigError("bridge: empty command in '" + uri + "'");
        return [rest, opts]() -> std::unique_ptr<Env> { return BridgeEnv::spawn(rest, opts); };
    }
    throw ConfigError("unknown environment '" + uri + "' (expected builtin:<name> or bridge:<command>)");
}

}  // namespace sdar
