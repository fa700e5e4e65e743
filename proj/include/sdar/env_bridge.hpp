#pragma once

// Environment served by a child process over line-delimited JSON on its stdin/stdout.
//
// Requests:  {"id":n,"cmd":"spec"|"reset"|"step"|"close","seed":int?,"action":[...]?}
// Replies:   {"id":n,"obs":[...],"reward":x?,"terminated":bool?,"truncated":bool?}
//            {"id":n,"error":"..."}
// The spec reply carries {"v":1,"obs_dim":..,"act_dim":..,"max_episode_steps":..}.
// Child diagnostics go to stderr and are attached to every error.

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sdar/envs.hpp"

namespace sdar {

inline constexpr int kProtocolVersion = 1;

struct BridgeOptions {
    std::chrono::milliseconds handshake_timeout{10000};
    std::chrono::milliseconds step_timeout{30000};
    std::chrono::milliseconds close_grace{2000};
    /// Keep every request and reply line (see BridgeEnv::transcript).
    bool record = false;
};

/// One transcript line: '>' for requests, '<' for replies.
struct WireLine {
    char direction = '>';
    std::string text;
};

/// Serializes a request line (no trailing newline) with 17 significant digits.
std::string encode_request(std::int64_t id, const std::string& cmd, const std::uint64_t* seed,
                           const std::vector<double>* action);

class BridgeEnv final : public Env {
public:
    /// Runs `command` through /bin/sh -c and performs the spec handshake.
    static std::unique_ptr<BridgeEnv> spawn(const std::string& command, BridgeOptions opts = {});
    ~BridgeEnv() override;
    BridgeEnv(const BridgeEnv&) = delete;
    BridgeEnv& operator=(const BridgeEnv&) = delete;

    const EnvSpec& spec() const override { return spec_; }
    std::vector<double> reset(std::uint64_t seed) override;
    StepResult step(std::span<const double> action) override;
    std::size_t clamp_count() const override { return clamps_; }

    /// Sends {"id":n,"cmd":<cmd><extra>} and returns the raw reply line without interpreting it.
    std::string exchange(const std::string& cmd, const std::string& extra = "");
    /// Sends close, waits for the child and reaps it. Idempotent.
    void shutdown();
    bool alive() const { return pid_ > 0; }
    std::int64_t last_request_id() const { return next_id_ - 1; }
    /// Captured child stderr (last few kilobytes).
    std::string child_stderr() const { return stderr_; }
    const std::vector<WireLine>& transcript() const { return transcript_; }

private:
    BridgeEnv() = default;

    std::string request(const std::string& line, std::chrono::milliseconds timeout);
    std::string read_line(std::chrono::milliseconds timeout);
    void drain_stderr();
    void check_quiet();
    [[noreturn]] void fail(const std::string& what);
    void kill_child();

    int pid_ = -1;
    int channel_ = -1;  // socket connected to the child's stdin and stdout
    int err_fd_ = -1;
    std::string inbox_;
    std::string stderr_;
    std::int64_t next_id_ = 1;
    EnvSpec spec_;
    BridgeOptions opts_;
    std::vector<WireLine> transcript_;
    std::size_t clamps_ = 0;
    bool episode_live_ = false;
};

/// "builtin:<name>" or "bridge:<command>". A bare name is treated as builtin.
EnvFactory env_factory_from_uri(const std::string& uri, BridgeOptions opts = {});

}  // namespace sdar
