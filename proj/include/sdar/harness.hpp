#pragma once

// Experiment plumbing shared by the command-line tool, the Python module and
// the acceptance runner: one training run with logs and checkpoints,
// checkpoint evaluation, the experiment matrix and CSV export.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sdar/config.hpp"
#include "sdar/env_bridge.hpp"
#include "sdar/metrics.hpp"
#include "sdar/runlog.hpp"
#include "sdar/trainer.hpp"

namespace sdar {

struct TrainRunOptions {
    /// Directory for log.jsonl, summary.json and checkpoint.bin; empty keeps everything in memory.
    std::string out_dir;
    /// Resume from this checkpoint (its config wins over the one passed in).
    std::string resume_from;
    /// Stop after this many total steps instead of total_steps (negative: run to the end).
    std::int64_t stop_at = -1;
    /// Also checkpoint every this many steps (0: only at the end).
    std::int64_t checkpoint_every = 0;
    bool write_checkpoint = true;
    /// Called with each evaluation record; returning true stops the run after that step.
    std::function<bool(const EvalRecord&)> stop_when;
    BridgeOptions bridge;
};

struct TrainRunResult {
    RunRecord record;
    std::int64_t steps = 0;
    bool finished = false;  // reached total_steps
    double wall_clock_seconds = 0.0;
    std::string log_path;
    std::string checkpoint_path;
};

TrainRunResult run_training(const RunConfig& cfg, const TrainRunOptions& opts = {});

struct EvalRunOptions {
    int episodes = 10;
    bool deterministic = true;
    std::uint64_t seed = 0;
    /// One JSON object per episode (actions, schemas, rewards).
    std::string traces_out;
    BridgeOptions bridge;
};

struct EvalRunResult {
    EvalSummary summary;
    std::vector<EpisodeTrace> traces;
    std::int64_t checkpoint_step = 0;
};

EvalRunResult run_evaluation(const std::string& checkpoint, const EvalRunOptions& opts = {});

void write_traces(const std::vector<EpisodeTrace>& traces, const std::string& path);
std::vector<EpisodeTrace> read_traces(const std::string& path);

struct MatrixSpec {
    RunConfig base;
    std::vector<std::string> envs;
    std::vector<Mode> modes;
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
    int jobs = 1;  // concurrent child processes
};

struct MatrixCell {
    std::string env;
    Mode mode = Mode::sdar;
    std::vector<double> auc;  // per seed
    std::vector<double> final_return;
    std::vector<double> final_apr;
    double auc_mean = 0.0;
    double auc_best_normalized = 0.0;  // see best_normalized; NaN when the best AUC is 0
    double final_return_mean = 0.0;
    double final_apr_mean = 0.0;
};

struct MatrixResult {
    std::vector<MatrixCell> cells;
    std::vector<std::string> run_dirs;
};

MatrixResult run_matrix(const MatrixSpec& spec);
/// Aggregates finished runs found in spec.out_dir without running anything.
MatrixResult aggregate_matrix(const MatrixSpec& spec);
std::string format_matrix_table(const MatrixResult& m);
void write_matrix_csv(const MatrixResult& m, const std::string& path);

/// Learning-curve CSV: step, return_mean, return_stderr, apr, afr, alpha_beta, alpha_pi,
/// critic_loss, train_return_mean, apr_dim<i>...
void export_curve_csv(const RunRecord& r, const std::string& path);
/// Writes <prefix>_ep<k>.csv per episode in the step,dim,b format. Returns the paths.
std::vector<std::string> export_selection_csv(const std::vector<EpisodeTrace>& traces, const std::string& prefix);

std::string run_dir_name(const RunConfig& cfg);

}  // namespace sdar
