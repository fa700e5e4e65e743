#pragma once

// Episode return, action persistence (APR), action fluctuation (AFR),
// normalized scores and learning-curve AUC.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sdar {

/// One rollout. actions[t] was executed at step t (t = 0..T-1) and is compared
/// against actions[t-1], with initial_action standing in for actions[-1]
/// (the zero vector in rollouts, matching the policy's episode-start input).
struct EpisodeTrace {
    std::vector<double> initial_action;
    std::vector<std::vector<double>> actions;
    std::vector<std::vector<std::uint8_t>> schemas;
    std::vector<double> rewards;

    std::size_t length() const { return actions.size(); }
    std::size_t act_dim() const { return initial_action.size(); }
    double episode_return() const;
    /// Throws ConfigError on inconsistent lengths or out-of-range actions.
    void validate() const;
};

struct AprOptions {
    /// 0 means bitwise equality; a positive value treats |a_t - a_{t-1}| <= tol as a repeat.
    double tolerance = 0.0;
};

struct AprResult {
    double p = 0.0;    // fraction of (step, dim) pairs that repeat
    double apr = 1.0;  // 1 / (1 - p); mean episode length when p == 1
    std::vector<double> p_per_dim;
    std::vector<double> apr_per_dim;
};

/// Pooled over all steps of all traces.
AprResult apr(std::span<const EpisodeTrace> traces, AprOptions opts = {});

enum class AfrNorm { euclidean, mean_abs };

/// Mean over all steps of all traces of |a_t - a_{t-1}|.
double afr(std::span<const EpisodeTrace> traces, AfrNorm norm = AfrNorm::euclidean);

struct NormalizationRef {
    double z0 = 0.0;  // random policy
    double z1 = 1.0;  // reference (vanilla) agent
};

/// (z - z0) / (z1 - z0), unclamped.
double n_score(double z, const NormalizationRef& ref);

/// Trapezoidal area under (step, score) divided by the step span.
double auc(std::span<const std::pair<double, double>> curve);

/// Each value divided by the maximum value, so the best entry is exactly 1. When every
/// value is negative the ratio is inverted (max / v). A zero maximum throws ConfigError.
std::vector<double> best_normalized(std::span<const double> values);

/// CSV with header "step,dim,b"; step is the 0-based step index within the episode.
void export_selection_trace(const EpisodeTrace& trace, const std::string& path);
/// Parses a file written by export_selection_trace back into per-step schemas.
std::vector<std::vector<std::uint8_t>> read_selection_trace(const std::string& path);

}  // namespace sdar
