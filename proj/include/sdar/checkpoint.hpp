#pragma once

// Binary checkpoints: little-endian, doubles stored as IEEE-754 binary64,
// every parameter set prefixed by its layer sizes. A SHA-256 of the payload
// closes the file.
//
// Contents: format version, precision, run config (canonical JSON), env spec,
// step, temperatures, beta / pi / q1 / q2 / q1_targ / q2_targ, four Adam
// states, env / policy / replay rng states, collector state, last losses,
// the replay buffer and (for built-in tasks) the environment state.

#include <cstdint>
#include <string>

#include "sdar/config.hpp"
#include "sdar/trainer.hpp"

namespace sdar {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
    std::uint32_t version = 0;
    Precision precision = Precision::f64;
    RunConfig config;
    EnvSpec env;
    std::int64_t step = 0;
    bool has_env_state = false;
};

template <typename T>
void save_checkpoint(const std::string& path, const RunConfig& cfg, Trainer<T>& trainer);

/// Reads only the leading metadata (config, precision, step).
CheckpointInfo read_checkpoint_info(const std::string& path);

/// Restores everything into a trainer built from the stored config. Throws
/// ConfigError when the trainer's precision, spec or layout disagree with the file.
template <typename T>
CheckpointInfo load_checkpoint(const std::string& path, Trainer<T>& trainer);

}  // namespace sdar
