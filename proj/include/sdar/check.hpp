#pragma once

// Self-check suites. Each returns PASS/FAIL with the measured quantity so the
// command-line `check` verb and the acceptance runner print the same evidence.

#include <cstdint>
#include <string>
#include <vector>

namespace sdar {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Repeat dimensions copy the previous action bitwise: 10^4 random tuples over |A| in {1, 2, 4, 8}.
CheckResult check_repeat_invariant(std::uint64_t seed = 1, int tuples = 10000);

/// Critic loss, action objective (pinned noise) and exact selection objective against
/// central differences (h = 1e-5, width 8, |A| = 2). Passes when max relative error < 1e-3.
CheckResult check_gradients(std::uint64_t seed = 2);

/// Exact enumeration vs the mean of `draws` per-draw sampled gradients (frozen nets,
/// |A| = 2, batch 8): every coordinate within 3 standard errors.
CheckResult check_estimator(std::uint64_t seed = 3, int draws = 100000);

/// mode = sac against a standalone single-stage SAC on a frozen buffer: bit-identical
/// parameters after `updates` updates.
CheckResult check_sac_equivalence(std::uint64_t seed = 4, int updates = 1000);

/// Temperature steps move toward the entropy targets and stand still at them.
CheckResult check_temperature(std::uint64_t seed = 5);

/// APR / AFR / n-score / AUC reference examples, exact to 1e-12.
CheckResult check_metrics();

/// Empirical repeat frequency over `calls` act() calls at `states` random (s, a_prev)
/// matches 1 - beta_i within 3 binomial standard deviations for every dimension.
CheckResult check_repeat_marginal(std::uint64_t seed = 7, int states = 20, int calls = 100000);

/// Same seed twice gives byte-identical logs; a run split by a checkpoint matches an
/// uninterrupted run byte for byte. Writes under `scratch_dir`.
CheckResult check_determinism(const std::string& scratch_dir, std::uint64_t seed = 8);

std::vector<std::string> check_names();
CheckResult run_check(const std::string& name, const std::string& scratch_dir);

std::string format_check_line(const CheckResult& r);

}  // namespace sdar
