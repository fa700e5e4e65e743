#pragma once

// JSONL run logs. Line 1 is a header, then one line per evaluation record,
// then an end marker. Nothing time-dependent is written here so that logs of
// the same seed are byte-identical; wall-clock goes to the run summary.

#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "sdar/config.hpp"
#include "sdar/trainer.hpp"

namespace sdar {

inline constexpr int kLogFormat = 1;

struct RunRecord {
    std::string run_id;
    std::string config_hash;
    std::uint64_t seed = 0;
    nlohmann::json config;
    EnvSpec env;
    std::vector<EvalRecord> evals;
    std::optional<std::int64_t> end_step;
    double wall_clock_seconds = 0.0;  // from the summary file, not the log
};

std::string make_run_id(const RunConfig& cfg);

nlohmann::json header_json(const RunConfig& cfg, const EnvSpec& spec);
nlohmann::json eval_json(const EvalRecord& r);
EvalRecord eval_from_json(const nlohmann::json& j);

class RunLogWriter {
public:
    /// Starts a fresh log (truncating any existing file).
    RunLogWriter(const std::string& path, const RunConfig& cfg, const EnvSpec& spec);
    /// Continues an existing log after resuming at `step`: keeps the header and
    /// every record with record.step <= step, drops the rest.
    static RunLogWriter resume(const std::string& path, std::int64_t step);

    void write(const EvalRecord& r);
    void finish(std::int64_t step);

private:
    RunLogWriter() = default;
    void line(const nlohmann::json& j);
    std::ofstream out_;
};

/// Parses a log. Throws IoError / ConfigError on malformed content naming the line.
RunRecord read_run_log(const std::string& path);
/// Re-serializes a parsed log; identical bytes to the file it came from.
std::string render_run_log(const RunRecord& r);

/// Learning curve (step, return mean) of a record.
std::vector<std::pair<double, double>> return_curve(const RunRecord& r);

}  // namespace sdar
